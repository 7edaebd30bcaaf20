//! Inference: popularity of each candidate frame against the topic list,
//! fusion with representativeness, thumbnail argmax and accuracy.

use std::io::Write;

use crate::error::{Error, Result};
use crate::frames::CandidateFrame;
use crate::model::{attend, ModelParams};
use crate::rng::SplitMix64;
use crate::wordspace::{TopicList, WordSpace};

/// Default fusion weight for representativeness.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// A micro-video's candidate frames and, for evaluation, its true thumbnail.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub candidates: Vec<CandidateFrame>,
    pub ground_truth: Option<usize>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::invalid(format!("video {} has no candidates", self.video_id)));
        }
        let mut ids: Vec<usize> = self.candidates.iter().map(|c| c.frame_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("video {} repeats a frame id", self.video_id)));
        }
        if let Some(gt) = self.ground_truth {
            if ids.binary_search(&gt).is_err() {
                return Err(Error::invalid(format!(
                    "video {}: ground truth {gt} is not a candidate",
                    self.video_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredFrame {
    pub frame_id: usize,
    pub popularity: f64,
    pub representativeness: f64,
    pub fused: f64,
}

/// How topic frequencies weight the per-topic similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopicWeighting {
    /// Frequencies normalized to sum to one.
    #[default]
    Normalized,
    /// Raw counts.
    RawCounts,
}

struct PreparedTopic {
    weight: f64,
    prototype: Vec<f64>,
    attention: Vec<f64>,
}

/// Model plus topic list with per-topic attention gates precomputed.
pub struct TopicScorer<'a> {
    params: &'a ModelParams,
    topics: Vec<PreparedTopic>,
}

impl<'a> TopicScorer<'a> {
    /// Topic words without a word vector are dropped and the remaining
    /// weights renormalized.
    pub fn new(
        params: &'a ModelParams,
        words: &WordSpace,
        topics: &TopicList,
        weighting: TopicWeighting,
    ) -> Result<Self> {
        if words.dim() != params.dims.d_sem {
            return Err(Error::shape("word space dimension", params.dims.d_sem, words.dim()));
        }
        let usable = topics.restrict_to(words)?;
        let topics = usable
            .items()
            .iter()
            .map(|t| {
                let prototype = words.prototype(&t.word).expect("restricted to vocabulary").to_vec();
                let attention = params.semantic_attention(&prototype)?;
                let weight = match weighting {
                    TopicWeighting::Normalized => t.weight,
                    TopicWeighting::RawCounts => t.count as f64,
                };
                Ok(PreparedTopic {
                    weight,
                    prototype,
                    attention,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, topics })
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    /// `Σ_m weight_m · s_mᵀ W_v (a_m ⊗ v)` with `v` the adapted feature.
    pub fn popularity(&self, feature: &[f64]) -> Result<f64> {
        let v = self.params.adapt(feature)?.feature;
        let mut total = 0.0;
        for topic in &self.topics {
            let attended = attend(&topic.attention, &v)?;
            total += topic.weight * self.params.score(&topic.prototype, &attended)?;
        }
        Ok(total)
    }

    pub fn score_video(&self, video: &VideoRecord, lambda: f64) -> Result<Vec<ScoredFrame>> {
        video.validate()?;
        video
            .candidates
            .iter()
            .map(|c| {
                let popularity = self.popularity(&c.feature)?;
                Ok(ScoredFrame {
                    frame_id: c.frame_id,
                    popularity,
                    representativeness: c.representativeness,
                    fused: fuse(popularity, c.representativeness, lambda),
                })
            })
            .collect()
    }

    pub fn select_thumbnail(&self, video: &VideoRecord, lambda: f64) -> Result<usize> {
        Ok(argmax_fused(&self.score_video(video, lambda)?))
    }
}

/// Popularity of one raw feature against a topic list.
pub fn popularity(
    params: &ModelParams,
    words: &WordSpace,
    feature: &[f64],
    topics: &TopicList,
    weighting: TopicWeighting,
) -> Result<f64> {
    TopicScorer::new(params, words, topics, weighting)?.popularity(feature)
}

/// `S = P + λ·R`.
pub fn fuse(popularity: f64, representativeness: f64, lambda: f64) -> f64 {
    popularity + lambda * representativeness
}

/// Highest fused score; ties go to the lowest frame id.
pub fn argmax_fused(scored: &[ScoredFrame]) -> usize {
    let mut best = &scored[0];
    for s in &scored[1..] {
        if s.fused > best.fused || (s.fused == best.fused && s.frame_id < best.frame_id) {
            best = s;
        }
    }
    best.frame_id
}

/// One row of the score report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub video_id: String,
    pub frame: ScoredFrame,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub rows: Vec<ScoreRow>,
}

/// Scores every video; returns the selected frame per video and report rows.
pub fn select_all(
    scorer: &TopicScorer<'_>,
    corpus: &[VideoRecord],
    lambda: f64,
) -> Result<(Vec<usize>, Vec<ScoreRow>)> {
    let mut selected = Vec::with_capacity(corpus.len());
    let mut rows = Vec::new();
    for video in corpus {
        let scored = scorer.score_video(video, lambda)?;
        let pick = argmax_fused(&scored);
        selected.push(pick);
        rows.extend(scored.into_iter().map(|frame| ScoreRow {
            video_id: video.video_id.clone(),
            selected: frame.frame_id == pick,
            frame,
        }));
    }
    Ok((selected, rows))
}

fn require_ground_truth(corpus: &[VideoRecord]) -> Result<Vec<usize>> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty corpus"));
    }
    corpus
        .iter()
        .map(|v| v.ground_truth.ok_or_else(|| Error::MissingGroundTruth(v.video_id.clone())))
        .collect()
}

/// Fraction of videos whose selected frame is the ground truth.
pub fn evaluate(scorer: &TopicScorer<'_>, corpus: &[VideoRecord], lambda: f64) -> Result<Evaluation> {
    let truth = require_ground_truth(corpus)?;
    let (selected, rows) = select_all(scorer, corpus, lambda)?;
    let hits = selected.iter().zip(&truth).filter(|(s, t)| s == t).count();
    Ok(Evaluation {
        accuracy: hits as f64 / corpus.len() as f64,
        rows,
    })
}

/// Uniform random choice among the candidates.
pub fn random_select(video: &VideoRecord, rng: &mut SplitMix64) -> usize {
    video.candidates[rng.below(video.candidates.len())].frame_id
}

/// Accuracy of the random reference selector.
pub fn evaluate_random(corpus: &[VideoRecord], seed: u64) -> Result<f64> {
    let truth = require_ground_truth(corpus)?;
    let mut rng = SplitMix64::new(seed);
    let hits = corpus
        .iter()
        .zip(&truth)
        .filter(|(v, &t)| random_select(v, &mut rng) == t)
        .count();
    Ok(hits as f64 / corpus.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const SCORE_REPORT_HEADER: &str = "video_id,frame_id,popularity,representativeness,fused,selected";

pub fn write_score_report(out: &mut impl Write, rows: &[ScoreRow]) -> std::io::Result<()> {
    writeln!(out, "{SCORE_REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.video_id,
            r.frame.frame_id,
            r.frame.popularity,
            r.frame.representativeness,
            r.frame.fused,
            r.selected
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::ModelDims;

    fn candidate(frame_id: usize, feature: Vec<f64>, r: f64) -> CandidateFrame {
        CandidateFrame {
            frame_id,
            feature,
            representativeness: r,
            cluster_size: 1,
        }
    }

    fn scored(frame_id: usize, p: f64, r: f64, lambda: f64) -> ScoredFrame {
        ScoredFrame {
            frame_id,
            popularity: p,
            representativeness: r,
            fused: fuse(p, r, lambda),
        }
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse(0.7, 0.4, 0.0), 0.7);
        assert!((fuse(1.0, 0.5, 0.2) - 1.1).abs() < 1e-12);
        assert_eq!(DEFAULT_LAMBDA, 0.2);
    }

    #[test]
    fn ties_go_to_lowest_frame_id() {
        let s = [scored(5, 1.0, 0.0, 0.2), scored(3, 1.0, 0.0, 0.2), scored(4, 0.5, 0.0, 0.2)];
        assert_eq!(argmax_fused(&s), 3);
        assert_eq!(argmax_fused(&s[..1]), 5);
    }

    #[test]
    fn lambda_extremes() {
        let s0 = [scored(0, 0.9, 0.1, 0.0), scored(1, 0.1, 0.9, 0.0)];
        assert_eq!(argmax_fused(&s0), 0);
        let big = [scored(0, 0.9, 0.1, 1e6), scored(1, 0.1, 0.9, 1e6)];
        assert_eq!(argmax_fused(&big), 1);
    }

    #[test]
    fn zero_adapter_has_zero_popularity() {
        let dims = ModelDims {
            d_raw: 3,
            d_hidden: 4,
            d_feat: 3,
            d_sem: 2,
        };
        let mut params = ModelParams::init(dims, 3).unwrap();
        params.adapter_w2 = Matrix::zeros(3, 4);
        let ws = WordSpace::from_entries(2, [("a", vec![1.0, 0.0])]).unwrap();
        let topics = TopicList::from_counts([("a", 3)]).unwrap();
        let p = popularity(&params, &ws, &[1.0, 2.0, 3.0], &topics, TopicWeighting::Normalized).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn unusable_topics_error() {
        let dims = ModelDims {
            d_raw: 3,
            d_hidden: 4,
            d_feat: 3,
            d_sem: 2,
        };
        let params = ModelParams::init(dims, 3).unwrap();
        let ws = WordSpace::from_entries(2, [("a", vec![1.0, 0.0])]).unwrap();
        let topics = TopicList::from_counts([("zz", 3)]).unwrap();
        assert!(popularity(&params, &ws, &[1.0, 2.0, 3.0], &topics, TopicWeighting::Normalized).is_err());
    }

    #[test]
    fn evaluation_requires_ground_truth() {
        let v = VideoRecord {
            video_id: "v9".into(),
            candidates: vec![candidate(0, vec![0.0], 1.0)],
            ground_truth: None,
        };
        match evaluate_random(&[v], 1) {
            Err(Error::MissingGroundTruth(id)) => assert_eq!(id, "v9"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(evaluate_random(&[], 1).is_err());
    }

    #[test]
    fn random_selector_hits_one_over_k() {
        // Monte Carlo: 10^4 videos with k = 7 candidates.
        let k = 7;
        let corpus: Vec<VideoRecord> = (0..10_000)
            .map(|i| VideoRecord {
                video_id: format!("v{i}"),
                candidates: (0..k).map(|f| candidate(f, vec![0.0], 1.0 / k as f64)).collect(),
                ground_truth: Some(i % k),
            })
            .collect();
        let acc = evaluate_random(&corpus, 17).unwrap();
        let p = 1.0 / k as f64;
        let se = (p * (1.0 - p) / corpus.len() as f64).sqrt();
        assert!((acc - p).abs() < 3.0 * se, "acc {acc} vs {p}");
    }

    #[test]
    fn record_validation() {
        let mut v = VideoRecord {
            video_id: "v".into(),
            candidates: vec![candidate(1, vec![0.0], 0.5), candidate(1, vec![0.0], 0.5)],
            ground_truth: None,
        };
        assert!(v.validate().is_err());
        v.candidates[1].frame_id = 2;
        v.ground_truth = Some(3);
        assert!(v.validate().is_err());
        v.ground_truth = Some(2);
        assert!(v.validate().is_ok());
    }
}
