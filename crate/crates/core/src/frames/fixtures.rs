//! Small handcrafted grayscale videos for exercising the frame pipeline:
//! textured scenes repeated as noisy near-duplicates, interleaved with
//! injected dark, constant and blurred frames.

use std::fs;
use std::path::{Path, PathBuf};

use super::{write_pnm, RawFrame};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const SIDE: usize = 32;
const BLOCK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    /// Noisy copy of scene `k`.
    Scene(usize),
    Dark,
    Constant,
    Blurred,
}

impl FrameKind {
    pub fn is_low_quality(self) -> bool {
        !matches!(self, FrameKind::Scene(_))
    }
}

#[derive(Debug, Clone)]
pub struct FixtureVideo {
    pub video_id: String,
    pub frames: Vec<RawFrame>,
    pub kinds: Vec<FrameKind>,
    pub n_scenes: usize,
}

fn block_texture(rng: &mut SplitMix64, lo: f64, hi: f64) -> Vec<f64> {
    let cells = SIDE / BLOCK;
    let levels: Vec<f64> = (0..cells * cells).map(|_| rng.uniform(lo, hi)).collect();
    (0..SIDE * SIDE)
        .map(|i| {
            let (x, y) = (i % SIDE, i / SIDE);
            levels[(y / BLOCK) * cells + x / BLOCK]
        })
        .collect()
}

fn quantize(values: &[f64]) -> Vec<u8> {
    values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

fn box_blur(values: &[f64], radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let n = SIDE as isize;
    let mut out = vec![0.0; values.len()];
    for y in 0..n {
        for x in 0..n {
            let mut sum = 0.0;
            let mut count = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = ((x + dx).clamp(0, n - 1), (y + dy).clamp(0, n - 1));
                    sum += values[(yy * n + xx) as usize];
                    count += 1.0;
                }
            }
            out[(y * n + x) as usize] = sum / count;
        }
    }
    out
}

/// One fixture video with `n_scenes` distinct scenes (each copied 1–6
/// times) and `n_bad` injected low-quality frames at random positions.
pub fn fixture_video(video_id: &str, n_scenes: usize, n_bad: usize, seed: u64) -> FixtureVideo {
    let mut rng = SplitMix64::new(seed);
    let scenes: Vec<Vec<f64>> = (0..n_scenes).map(|_| block_texture(&mut rng, 40.0, 220.0)).collect();
    let mut kinds: Vec<FrameKind> = Vec::new();
    for k in 0..n_scenes {
        let copies = 1 + rng.below(6);
        kinds.extend(std::iter::repeat(FrameKind::Scene(k)).take(copies));
    }
    for i in 0..n_bad {
        kinds.push(match i % 3 {
            0 => FrameKind::Dark,
            1 => FrameKind::Constant,
            _ => FrameKind::Blurred,
        });
    }
    rng.shuffle(&mut kinds);
    let frames = kinds
        .iter()
        .map(|kind| {
            let values = match *kind {
                FrameKind::Scene(k) => scenes[k]
                    .iter()
                    .map(|v| v + rng.uniform(-6.0, 6.0))
                    .collect(),
                FrameKind::Dark => block_texture(&mut rng, 0.0, 25.0),
                FrameKind::Constant => vec![rng.uniform(60.0, 200.0).round(); SIDE * SIDE],
                FrameKind::Blurred => {
                    let base = block_texture(&mut rng, 40.0, 220.0);
                    (0..4).fold(base, |acc, _| box_blur(&acc, 4))
                }
            };
            RawFrame::gray(SIDE, SIDE, quantize(&values)).expect("fixture dimensions")
        })
        .collect();
    FixtureVideo {
        video_id: video_id.to_string(),
        frames,
        kinds,
        n_scenes,
    }
}

/// `n_videos` fixture videos with 7–12 scenes and 1–3 bad frames each.
pub fn fixture_corpus(n_videos: usize, seed: u64) -> Vec<FixtureVideo> {
    let mut rng = SplitMix64::new(seed);
    (0..n_videos)
        .map(|i| {
            let scenes = 7 + rng.below(6);
            let bad = 1 + rng.below(3);
            fixture_video(&format!("fx{i:03}"), scenes, bad, rng.next_u64())
        })
        .collect()
}

/// Writes each video as `<dir>/<video_id>/frame_NNN.pgm`.
pub fn write_fixture_corpus(dir: &Path, videos: &[FixtureVideo]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for v in videos {
        let vdir = dir.join(&v.video_id);
        fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        for (i, f) in v.frames.iter().enumerate() {
            let p = vdir.join(format!("frame_{i:03}.pgm"));
            write_pnm(&p, f)?;
            written.push(p);
        }
    }
    Ok(written)
}
