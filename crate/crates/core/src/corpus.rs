//! Feature, candidate-manifest and ground-truth files.
//!
//! * Features: `video_id,frame_id,label_set,f1..fd`, labels `|`-separated
//!   (empty for unlabeled rows).
//! * Candidate manifest: `video_id,frame_id,cluster_size,representativeness`.
//! * Ground truth: `video_id,frame_id`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::CandidateFrame;
use crate::selector::VideoRecord;

/// A labeled training image (source domain).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub labels: Vec<String>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub video_id: String,
    pub frame_id: usize,
    pub labels: Vec<String>,
    pub feature: Vec<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_features<'a>(path: &Path, rows: impl IntoIterator<Item = &'a FeatureRow>) -> Result<()> {
    let mut rows = rows.into_iter().peekable();
    let dim = rows.peek().map_or(0, |r| r.feature.len());
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    write!(out, "video_id,frame_id,label_set").map_err(io)?;
    for i in 1..=dim {
        write!(out, ",f{i}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for r in rows {
        if r.feature.len() != dim {
            return Err(Error::shape("feature row", dim, r.feature.len()));
        }
        write!(out, "{},{},{}", r.video_id, r.frame_id, r.labels.join("|")).map_err(io)?;
        for x in &r.feature {
            write!(out, ",{x}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad {what} '{field}'"),
    })
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected video_id,frame_id,label_set and at least one feature".into(),
            });
        }
        let labels = match &rec[2] {
            "" => Vec::new(),
            s => s.split('|').map(str::to_string).collect(),
        };
        let feature = rec
            .iter()
            .skip(3)
            .map(|f| {
                let x: f64 = parse_field(path, line, f, "feature value")?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: "non-finite feature value".into(),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureRow {
            video_id: rec[0].to_string(),
            frame_id: parse_field(path, line, &rec[1], "frame id")?,
            labels,
            feature,
        });
    }
    Ok(rows)
}

pub fn labeled_examples(rows: Vec<FeatureRow>) -> Result<Vec<LabeledExample>> {
    rows.into_iter()
        .map(|r| {
            if r.labels.is_empty() {
                return Err(Error::invalid(format!("source row {} has no labels", r.video_id)));
            }
            Ok(LabeledExample {
                id: r.video_id,
                labels: r.labels,
                feature: r.feature,
            })
        })
        .collect()
}

/// `(video_id, frame_id) → (cluster_size, representativeness)`
pub type Manifest = HashMap<(String, usize), (usize, f64)>;

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut rdr = reader(path)?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected 4 columns".into(),
            });
        }
        out.insert(
            (rec[0].to_string(), parse_field(path, line, &rec[1], "frame id")?),
            (
                parse_field(path, line, &rec[2], "cluster size")?,
                parse_field(path, line, &rec[3], "representativeness")?,
            ),
        );
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, videos: &[VideoRecord]) -> Result<()> {
    let mut out = create(path)?;
    crate::frames::write_candidate_manifest(
        &mut out,
        videos.iter().map(|v| (v.video_id.as_str(), v.candidates.as_slice())),
    )
    .and_then(|_| out.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<HashMap<String, usize>> {
    let mut rdr = reader(path)?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected video_id,frame_id".into(),
            });
        }
        out.insert(rec[0].to_string(), parse_field(path, line, &rec[1], "frame id")?);
    }
    Ok(out)
}

pub fn write_ground_truth(path: &Path, videos: &[VideoRecord]) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "video_id,frame_id").map_err(io)?;
    for v in videos {
        if let Some(gt) = v.ground_truth {
            writeln!(out, "{},{}", v.video_id, gt).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Rows of candidate features as written by [`write_features`].
pub fn video_feature_rows(videos: &[VideoRecord]) -> Vec<FeatureRow> {
    videos
        .iter()
        .flat_map(|v| {
            v.candidates.iter().map(move |c| FeatureRow {
                video_id: v.video_id.clone(),
                frame_id: c.frame_id,
                labels: Vec::new(),
                feature: c.feature.clone(),
            })
        })
        .collect()
}

/// Groups candidate feature rows into videos (in first-appearance order),
/// joining the manifest and, when given, the ground truth.
pub fn assemble_videos(
    rows: Vec<FeatureRow>,
    manifest: &Manifest,
    ground_truth: Option<&HashMap<String, usize>>,
) -> Result<Vec<VideoRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_video: HashMap<String, Vec<CandidateFrame>> = HashMap::new();
    for r in rows {
        let key = (r.video_id.clone(), r.frame_id);
        let &(cluster_size, representativeness) = manifest.get(&key).ok_or_else(|| {
            Error::invalid(format!(
                "frame {} of video {} is missing from the candidate manifest",
                r.frame_id, r.video_id
            ))
        })?;
        let entry = by_video.entry(r.video_id.clone()).or_insert_with(|| {
            order.push(r.video_id.clone());
            Vec::new()
        });
        entry.push(CandidateFrame {
            frame_id: r.frame_id,
            feature: r.feature,
            representativeness,
            cluster_size,
        });
    }
    order
        .into_iter()
        .map(|video_id| {
            let candidates = by_video.remove(&video_id).expect("grouped");
            let ground_truth = ground_truth.and_then(|gt| gt.get(&video_id).copied());
            let v = VideoRecord {
                video_id,
                candidates,
                ground_truth,
            };
            v.validate()?;
            Ok(v)
        })
        .collect()
}
