//! Candidate-frame preparation: low-quality filtering, near-duplicate
//! clustering and representativeness.

pub mod fixtures;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::linalg::{cosine_distance, norm};

/// An 8-bit grayscale or RGB frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::shape("frame pixels", width * height * channels, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Rec.601 luma per pixel on the 0–255 scale.
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f64).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
                .collect(),
        }
    }
}

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn read_pnm(path: &Path) -> Result<RawFrame> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => RawFrame::new(w, h, 1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => RawFrame::new(w, h, 3, buf.into_raw()),
        other => Err(Error::invalid(format!(
            "{}: expected 8-bit gray or RGB, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Writes a binary PGM (gray) or PPM (RGB) file.
pub fn write_pnm(path: &Path, frame: &RawFrame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let (subtype, color) = match frame.channels {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        _ => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
    };
    PnmEncoder::new(BufWriter::new(file)).with_subtype(subtype).write_image(
        &frame.pixels,
        frame.width as u32,
        frame.height as u32,
        color,
    )?;
    Ok(())
}

/// Mean luma scaled to `[0, 1]`.
pub fn luma_mean(frame: &RawFrame) -> f64 {
    let luma = frame.luma();
    luma.iter().sum::<f64>() / luma.len() as f64 / 255.0
}

/// Variance of the 4-neighbour Laplacian over interior luma pixels.
pub fn laplacian_variance(frame: &RawFrame) -> Result<f64> {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!("Laplacian needs at least 3x3 pixels, got {w}x{h}")));
    }
    let luma = frame.luma();
    let at = |x: usize, y: usize| luma[y * w + x];
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            responses.push(at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y));
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    Ok(responses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n)
}

pub const HISTOGRAM_BINS: usize = 64;

/// Shannon entropy (bits) of the 64-bin luma histogram.
pub fn histogram_entropy(frame: &RawFrame) -> f64 {
    let mut counts = [0usize; HISTOGRAM_BINS];
    let luma = frame.luma();
    for l in &luma {
        let bin = ((l / 256.0 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let n = luma.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Minimum scores a frame must strictly exceed to count as high quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    pub dark: f64,
    pub blur: f64,
    pub entropy: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            dark: 0.12,
            blur: 15.0,
            entropy: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScores {
    pub luma_mean: f64,
    pub laplacian_variance: f64,
    pub entropy: f64,
}

impl QualityScores {
    pub fn of(frame: &RawFrame) -> Result<Self> {
        Ok(Self {
            luma_mean: luma_mean(frame),
            laplacian_variance: laplacian_variance(frame)?,
            entropy: histogram_entropy(frame),
        })
    }

    pub fn passes(&self, t: &QualityThresholds) -> bool {
        self.luma_mean > t.dark && self.laplacian_variance > t.blur && self.entropy > t.entropy
    }
}

/// Indices of frames that are neither dark, blurry nor uniform.
pub fn quality_filter(frames: &[RawFrame], thresholds: &QualityThresholds) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if QualityScores::of(f)?.passes(thresholds) {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Index of the founding frame.
    pub leader: usize,
    /// Member indices in input order; the leader comes first.
    pub members: Vec<usize>,
}

/// Greedy leader clustering in input order: each vector joins the first
/// cluster whose leader is within cosine distance `tau`, otherwise it founds
/// a new cluster.
pub fn leader_cluster(features: &[Vec<f64>], tau: f64) -> Result<Vec<Cluster>> {
    if !(tau > 0.0 && tau < 2.0) {
        return Err(Error::invalid(format!("cosine threshold must lie in (0, 2), got {tau}")));
    }
    if let Some(i) = features.iter().position(|f| norm(f) == 0.0) {
        return Err(Error::invalid(format!("feature {i} is the zero vector")));
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, f) in features.iter().enumerate() {
        match clusters
            .iter_mut()
            .find(|c| cosine_distance(&features[c.leader], f) < tau)
        {
            Some(c) => c.members.push(i),
            None => clusters.push(Cluster {
                leader: i,
                members: vec![i],
            }),
        }
    }
    Ok(clusters)
}

/// Member minimizing the summed cosine distance to the cluster; ties go to
/// the lowest frame id.
pub fn medoid(features: &[Vec<f64>], frame_ids: &[usize], members: &[usize]) -> usize {
    let mut best: Option<(f64, usize, usize)> = None;
    for &m in members {
        let cost: f64 = members
            .iter()
            .map(|&o| cosine_distance(&features[m], &features[o]))
            .sum();
        let id = frame_ids[m];
        let better = match best {
            None => true,
            Some((c, bid, _)) => cost < c || (cost == c && id < bid),
        };
        if better {
            best = Some((cost, id, m));
        }
    }
    best.expect("cluster has members").2
}

/// A representative candidate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFrame {
    pub frame_id: usize,
    pub feature: Vec<f64>,
    /// Fraction of the video's kept frames in this frame's cluster.
    pub representativeness: f64,
    pub cluster_size: usize,
}

/// Default cosine-distance threshold for near-duplicate clustering.
pub const DEFAULT_TAU: f64 = 0.3;

/// Clusters high-quality frames and keeps one medoid per cluster.
pub fn candidates_from_features(
    video_id: &str,
    frame_ids: &[usize],
    features: &[Vec<f64>],
    tau: f64,
) -> Result<Vec<CandidateFrame>> {
    if features.is_empty() {
        return Err(Error::NoCandidates(video_id.to_string()));
    }
    if frame_ids.len() != features.len() {
        return Err(Error::shape("frame ids", features.len(), frame_ids.len()));
    }
    let clusters = leader_cluster(features, tau)?;
    let total = features.len() as f64;
    Ok(clusters
        .iter()
        .map(|c| {
            let m = medoid(features, frame_ids, &c.members);
            CandidateFrame {
                frame_id: frame_ids[m],
                feature: features[m].clone(),
                representativeness: c.members.len() as f64 / total,
                cluster_size: c.members.len(),
            }
        })
        .collect())
}

/// One decoded frame with its visual feature.
#[derive(Debug, Clone)]
pub struct VideoFrame {
    pub frame_id: usize,
    pub frame: RawFrame,
    pub feature: Vec<f64>,
}

/// Quality filter, near-duplicate clustering and medoid extraction.
pub fn extract_candidates(
    video_id: &str,
    frames: &[VideoFrame],
    thresholds: &QualityThresholds,
    tau: f64,
) -> Result<Vec<CandidateFrame>> {
    let raw: Vec<RawFrame> = frames.iter().map(|f| f.frame.clone()).collect();
    let kept = quality_filter(&raw, thresholds)?;
    if kept.is_empty() {
        return Err(Error::NoCandidates(video_id.to_string()));
    }
    let ids: Vec<usize> = kept.iter().map(|&i| frames[i].frame_id).collect();
    let feats: Vec<Vec<f64>> = kept.iter().map(|&i| frames[i].feature.clone()).collect();
    candidates_from_features(video_id, &ids, &feats, tau)
}

/// Mean-centered block-average luma on a `grid × grid` raster; a cheap
/// pixel-level feature for frames that lack a learned descriptor.
pub fn thumbnail_feature(frame: &RawFrame, grid: usize) -> Vec<f64> {
    let luma = frame.luma();
    let (w, h) = (frame.width, frame.height);
    let mut sums = vec![0.0; grid * grid];
    let mut counts = vec![0usize; grid * grid];
    for y in 0..h {
        for x in 0..w {
            let cell = (y * grid / h) * grid + x * grid / w;
            sums[cell] += luma[y * w + x];
            counts[cell] += 1;
        }
    }
    let mut cells: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    cells.iter_mut().for_each(|c| *c -= mean);
    cells
}

pub const CANDIDATE_MANIFEST_HEADER: &str = "video_id,frame_id,cluster_size,representativeness";

pub fn write_candidate_manifest<'a, I>(out: &mut impl Write, videos: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a [CandidateFrame])>,
{
    writeln!(out, "{CANDIDATE_MANIFEST_HEADER}")?;
    for (video_id, candidates) in videos {
        for c in candidates {
            writeln!(
                out,
                "{},{},{},{}",
                video_id, c.frame_id, c.cluster_size, c.representativeness
            )?;
        }
    }
    Ok(())
}
