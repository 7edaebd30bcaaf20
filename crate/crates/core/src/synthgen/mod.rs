//! Deterministic synthetic corpora with planted cross-modal structure.
//!
//! Every word gets a random unit prototype. A fixed Gaussian matrix lifts
//! semantic mixtures into the raw feature space. Source images are mixtures
//! of their label prototypes. In each target video the ground-truth frame
//! mixes two popular topic words (drawn by topic weight), while distractor
//! frames mix off-topic labels, or lightly blend one topic word into
//! off-topic content. All target frames then pass through a fixed affine
//! domain shift.

pub mod oracle;

use std::fs;
use std::path::Path;

use crate::corpus::{self, FeatureRow, LabeledExample};
use crate::error::{Error, Result};
use crate::frames::CandidateFrame;
use crate::linalg::{axpy, Matrix};
use crate::rng::SplitMix64;
use crate::selector::VideoRecord;
use crate::wordspace::{TopicList, WordSpace};

/// Coefficient of the topic word blended into a hard distractor.
pub const HARD_TOPIC_COEF: f64 = 0.2;
/// Raw count of the most popular topic; rank `r` gets `TOP_COUNT / r`.
pub const TOP_COUNT: u64 = 30_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_videos: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Words used as source labels.
    pub n_labels: usize,
    pub n_topics: usize,
    /// Fraction of topic words that never occur as source labels.
    pub zero_shot_fraction: f64,
    pub n_source: usize,
    pub max_labels_per_example: usize,
    pub d_raw: usize,
    pub d_sem: usize,
    pub noise_sigma: f64,
    /// Fraction of distractors that carry a faint topic word.
    pub hard_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_videos: 200,
            frames_min: 7,
            frames_max: 12,
            n_labels: 40,
            n_topics: 10,
            zero_shot_fraction: 0.3,
            n_source: 2000,
            max_labels_per_example: 3,
            d_raw: 64,
            d_sem: 32,
            noise_sigma: 0.05,
            hard_fraction: 0.3,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_videos", self.n_videos),
            ("frames_min", self.frames_min),
            ("n_labels", self.n_labels),
            ("n_topics", self.n_topics),
            ("n_source", self.n_source),
            ("max_labels_per_example", self.max_labels_per_example),
            ("d_raw", self.d_raw),
            ("d_sem", self.d_sem),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.frames_max < self.frames_min {
            return Err(Error::invalid("frames_max must be at least frames_min"));
        }
        if !(0.0..=1.0).contains(&self.zero_shot_fraction) || !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::invalid("fractions must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if self.n_zero_shot() > self.n_topics || self.n_topics - self.n_zero_shot() > self.n_labels {
            return Err(Error::invalid("not enough labels for the seen topic words"));
        }
        Ok(())
    }

    pub fn n_zero_shot(&self) -> usize {
        (self.zero_shot_fraction * self.n_topics as f64).round() as usize
    }
}

/// Fixed affine map applied to target-domain features: `x ↦ scale ⊗ x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainShift {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl DomainShift {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.scale)
            .zip(&self.offset)
            .map(|((x, s), o)| s * x + o)
            .collect()
    }
}

/// Generative ground truth for one candidate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFrame {
    /// Semantic mixture the frame was generated from.
    pub semantic: Vec<f64>,
    /// Raw feature before noise and domain shift (`lift · semantic`).
    pub clean_feature: Vec<f64>,
    /// `Σ_m weight_m · coefficient of topic m in the mixture`.
    pub topic_mass: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub words: WordSpace,
    pub topics: TopicList,
    /// Source-domain label vocabulary.
    pub labels: Vec<String>,
    /// Topic words that never occur as source labels.
    pub zero_shot_words: Vec<String>,
    pub source: Vec<LabeledExample>,
    pub videos: Vec<VideoRecord>,
    /// Per video, per candidate (same order as `videos[i].candidates`).
    pub planted: Vec<Vec<PlantedFrame>>,
    pub lift: Matrix,
    pub shift: DomainShift,
}

impl SynthCorpus {
    /// Every candidate feature, for use as the unlabeled target pool.
    pub fn target_pool(&self) -> Vec<Vec<f64>> {
        target_pool(&self.videos)
    }

    pub fn is_zero_shot(&self, word: &str) -> bool {
        self.zero_shot_words.iter().any(|w| w == word)
    }

    /// Writes `words.txt`, `topics.tsv`, `source.csv`, `target.csv`,
    /// `candidates.csv` and `ground_truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.words.save(&dir.join(files::WORDS))?;
        self.topics.save(&dir.join(files::TOPICS))?;
        let source_rows: Vec<FeatureRow> = self
            .source
            .iter()
            .map(|e| FeatureRow {
                video_id: e.id.clone(),
                frame_id: 0,
                labels: e.labels.clone(),
                feature: e.feature.clone(),
            })
            .collect();
        corpus::write_features(&dir.join(files::SOURCE), &source_rows)?;
        corpus::write_features(&dir.join(files::TARGET), &corpus::video_feature_rows(&self.videos))?;
        corpus::write_manifest(&dir.join(files::CANDIDATES), &self.videos)?;
        corpus::write_ground_truth(&dir.join(files::GROUND_TRUTH), &self.videos)?;
        Ok(())
    }
}

pub fn target_pool(videos: &[VideoRecord]) -> Vec<Vec<f64>> {
    videos
        .iter()
        .flat_map(|v| v.candidates.iter().map(|c| c.feature.clone()))
        .collect()
}

/// File names used by [`SynthCorpus::write`].
pub mod files {
    pub const WORDS: &str = "words.txt";
    pub const TOPICS: &str = "topics.tsv";
    pub const SOURCE: &str = "source.csv";
    pub const TARGET: &str = "target.csv";
    pub const CANDIDATES: &str = "candidates.csv";
    pub const GROUND_TRUTH: &str = "ground_truth.csv";
}

fn mixture(prototypes: &[&[f64]], coefs: &[f64], dim: usize) -> Vec<f64> {
    let mut z = vec![0.0; dim];
    for (p, c) in prototypes.iter().zip(coefs) {
        axpy(*c, p, &mut z);
    }
    z
}

/// Draws `k` distinct indices from `0..n`, each draw proportional to `weights`.
fn weighted_distinct(rng: &mut SplitMix64, weights: &[f64], k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(weights.len()) {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.next_f64() * total;
        let mut pick = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            if u < weights[i] {
                pick = pos;
                break;
            }
            u -= weights[i];
        }
        out.push(remaining.remove(pick));
    }
    out
}

fn distinct(rng: &mut SplitMix64, pool: &[usize], k: usize) -> Vec<usize> {
    let mut pool = pool.to_vec();
    rng.shuffle(&mut pool);
    pool.truncate(k);
    pool
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let n_zero = spec.n_zero_shot();
    let n_seen_topics = spec.n_topics - n_zero;

    let labels: Vec<String> = (0..spec.n_labels).map(|i| format!("label{i:02}")).collect();
    let zero_shot_words: Vec<String> = (0..n_zero).map(|i| format!("novel{i:02}")).collect();
    let vocab: Vec<String> = labels.iter().chain(&zero_shot_words).cloned().collect();
    let prototypes: Vec<Vec<f64>> = vocab.iter().map(|_| rng.unit_vector(spec.d_sem)).collect();

    let mut label_order: Vec<usize> = (0..spec.n_labels).collect();
    rng.shuffle(&mut label_order);
    let seen_topics = &label_order[..n_seen_topics];
    let mut topic_words: Vec<usize> = seen_topics
        .iter()
        .copied()
        .chain(spec.n_labels..spec.n_labels + n_zero)
        .collect();
    rng.shuffle(&mut topic_words);
    let topic_counts: Vec<u64> = (1..=spec.n_topics as u64).map(|r| TOP_COUNT / r).collect();
    let topics = TopicList::from_counts(
        topic_words
            .iter()
            .zip(&topic_counts)
            .map(|(&w, &c)| (vocab[w].clone(), c)),
    )?;
    let topic_weights: Vec<f64> = topics.items().iter().map(|t| t.weight).collect();
    let off_topic: Vec<usize> = label_order[n_seen_topics..].to_vec();

    let lift = Matrix::from_fn(spec.d_raw, spec.d_sem, |_, _| rng.normal());
    let scale: Vec<f64> = (0..spec.d_raw).map(|_| rng.uniform(0.7, 1.3)).collect();
    let offset: Vec<f64> = rng.unit_vector(spec.d_raw).iter().map(|x| 0.3 * x).collect();
    let shift = DomainShift { scale, offset };

    let noisy = |rng: &mut SplitMix64, z: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let clean = lift.matvec(z);
        let x = clean.iter().map(|c| c + spec.noise_sigma * rng.normal()).collect();
        (clean, x)
    };

    let all_labels: Vec<usize> = (0..spec.n_labels).collect();
    let mut source = Vec::with_capacity(spec.n_source);
    for i in 0..spec.n_source {
        let k = 1 + rng.below(spec.max_labels_per_example.min(spec.n_labels));
        let picked = distinct(&mut rng, &all_labels, k);
        let protos: Vec<&[f64]> = picked.iter().map(|&l| prototypes[l].as_slice()).collect();
        let z = mixture(&protos, &vec![1.0 / k as f64; k], spec.d_sem);
        let (_, feature) = noisy(&mut rng, &z);
        source.push(LabeledExample {
            id: format!("s{i:05}"),
            labels: picked.iter().map(|&l| vocab[l].clone()).collect(),
            feature,
        });
    }

    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut planted = Vec::with_capacity(spec.n_videos);
    for v in 0..spec.n_videos {
        let k = spec.frames_min + rng.below(spec.frames_max - spec.frames_min + 1);
        let gt_pos = rng.below(k);
        let gt_topics = weighted_distinct(&mut rng, &topic_weights, 2);
        let mut frames = Vec::with_capacity(k);
        let mut sizes = Vec::with_capacity(k);
        for pos in 0..k {
            let (z, mass) = if pos == gt_pos {
                let c = 1.0 / gt_topics.len() as f64;
                let protos: Vec<&[f64]> = gt_topics.iter().map(|&t| prototypes[topic_words[t]].as_slice()).collect();
                let mass = gt_topics.iter().map(|&t| c * topic_weights[t]).sum();
                (mixture(&protos, &vec![c; protos.len()], spec.d_sem), mass)
            } else {
                let others: Vec<usize> = (0..spec.n_topics).filter(|t| !gt_topics.contains(t)).collect();
                let hard = rng.next_f64() < spec.hard_fraction && !others.is_empty();
                let background = if off_topic.is_empty() {
                    rng.unit_vector(spec.d_sem)
                } else {
                    let m = 1 + rng.below(2.min(off_topic.len()));
                    let picked = distinct(&mut rng, &off_topic, m);
                    let protos: Vec<&[f64]> = picked.iter().map(|&l| prototypes[l].as_slice()).collect();
                    mixture(&protos, &vec![1.0 / m as f64; m], spec.d_sem)
                };
                if hard {
                    let t = others[rng.below(others.len())];
                    let mut z: Vec<f64> = background.iter().map(|b| (1.0 - HARD_TOPIC_COEF) * b).collect();
                    axpy(HARD_TOPIC_COEF, &prototypes[topic_words[t]], &mut z);
                    (z, HARD_TOPIC_COEF * topic_weights[t])
                } else {
                    (background, 0.0)
                }
            };
            let size = if pos == gt_pos { 3 + rng.below(6) } else { 1 + rng.below(6) };
            let (clean, x) = noisy(&mut rng, &z);
            sizes.push(size);
            frames.push((shift.apply(&x), PlantedFrame {
                semantic: z,
                clean_feature: clean,
                topic_mass: mass,
            }));
        }
        let total: usize = sizes.iter().sum();
        let (candidates, plants): (Vec<CandidateFrame>, Vec<PlantedFrame>) = frames
            .into_iter()
            .zip(&sizes)
            .enumerate()
            .map(|(pos, ((feature, plant), &size))| {
                (
                    CandidateFrame {
                        frame_id: pos,
                        feature,
                        representativeness: size as f64 / total as f64,
                        cluster_size: size,
                    },
                    plant,
                )
            })
            .unzip();
        videos.push(VideoRecord {
            video_id: format!("v{v:04}"),
            candidates,
            ground_truth: Some(gt_pos),
        });
        planted.push(plants);
    }

    let words = WordSpace::from_entries(spec.d_sem, vocab.iter().cloned().zip(prototypes))?;
    Ok(SynthCorpus {
        spec: spec.clone(),
        words,
        topics,
        labels,
        zero_shot_words,
        source,
        videos,
        planted,
        lift,
        shift,
    })
}
