//! Self-verification suites: analytic gradients against central finite
//! differences, and the optimized MMD and popularity paths against the
//! literal oracles in [`crate::synthgen::oracle`].

use std::fmt;

use crate::error::Result;
use crate::model::{ModelDims, ModelParams, TensorId};
use crate::objective::{
    loss_and_gradients, mk_mmd, total_loss, Hyper, KernelBank, LayerBanks, RankTarget, SourceSample, TrainBatch,
};
use crate::rng::SplitMix64;
use crate::selector::{popularity, TopicWeighting};
use crate::synthgen::oracle::{oracle_mmd, oracle_popularity};
use crate::synthgen::{generate_corpus, SynthSpec};
use crate::wordspace::TopicList;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Mmd,
    Popularity,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradients => "grads",
            Suite::Mmd => "mmd",
            Suite::Popularity => "popularity",
        }
    }
}

/// One line of the verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    /// Worst observed error.
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl fmt::Display for CheckRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<10} {:<28} worst={:.3e} tol={:.0e} cases={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.worst,
            self.tolerance,
            self.cases
        )
    }
}

pub fn all_passed(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.passed)
}

fn row(suite: Suite, name: impl Into<String>, worst: f64, tolerance: f64, cases: usize) -> CheckRow {
    CheckRow {
        suite,
        name: name.into(),
        passed: worst <= tolerance,
        worst,
        tolerance,
        cases,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub seeds: Vec<u64>,
    pub coords_per_tensor: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error of near-zero gradients.
    pub floor: f64,
    /// Flip the sign of this tensor's analytic gradient.
    pub sabotage: Option<TensorId>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            coords_per_tensor: 20,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            sabotage: None,
        }
    }
}

const GRAD_DIMS: ModelDims = ModelDims {
    d_raw: 8,
    d_hidden: 24,
    d_feat: 20,
    d_sem: 6,
};

struct GradProblem {
    params: ModelParams,
    prototypes: Vec<Vec<f64>>,
    source_features: Vec<Vec<f64>>,
    targets: Vec<Vec<RankTarget>>,
    target_features: Vec<Vec<f64>>,
    hyper: Hyper,
}

impl GradProblem {
    fn new(seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::new(seed ^ 0x5eed_cafe);
        let mut params = ModelParams::init(GRAD_DIMS, seed)?;
        // Nonzero biases so their gradients are exercised away from init.
        for b in params.adapter_b1.iter_mut().chain(params.adapter_b2.iter_mut()) {
            *b = rng.uniform(-0.1, 0.1);
        }
        let n_words = 7;
        let prototypes: Vec<Vec<f64>> = (0..n_words).map(|_| rng.unit_vector(GRAD_DIMS.d_sem)).collect();
        let features = |rng: &mut SplitMix64, n: usize, shift: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..GRAD_DIMS.d_raw).map(|_| rng.normal() + shift).collect())
                .collect()
        };
        let source_features = features(&mut rng, 5, 0.0);
        let target_features = features(&mut rng, 4, 0.5);
        let targets = (0..source_features.len())
            .map(|_| {
                let mut words: Vec<usize> = (0..n_words).collect();
                rng.shuffle(&mut words);
                let n_pos = 1 + rng.below(2);
                let (pos, neg) = words.split_at(n_pos);
                pos.iter()
                    .map(|&p| RankTarget {
                        positive: p,
                        negatives: neg[..3].to_vec(),
                    })
                    .collect()
            })
            .collect();
        let hyper = Hyper {
            alpha: 0.5,
            eta: 1e-2,
            gamma: 1e-2,
            mu: 0.5,
            attend_negatives: seed % 2 == 1,
        };
        Ok(Self {
            params,
            prototypes,
            source_features,
            targets,
            target_features,
            hyper,
        })
    }

    fn batch(&self) -> TrainBatch<'_> {
        TrainBatch {
            prototypes: &self.prototypes,
            source: self
                .source_features
                .iter()
                .zip(&self.targets)
                .map(|(f, t)| SourceSample {
                    feature: f,
                    targets: t.clone(),
                })
                .collect(),
            target: self.target_features.iter().map(Vec::as_slice).collect(),
        }
    }
}

/// Relative error per tensor, worst over all seeds and sampled coordinates.
pub fn gradient_check(opts: &GradCheckOptions) -> Result<Vec<CheckRow>> {
    let mut worst = [0.0f64; TensorId::ALL.len()];
    for &seed in &opts.seeds {
        let problem = GradProblem::new(seed)?;
        let batch = problem.batch();
        let banks = LayerBanks::median_heuristic(&problem.params, &batch)?;
        let (_, mut grads) = loss_and_gradients(&problem.params, &batch, &banks, &problem.hyper)?;
        if let Some(t) = opts.sabotage {
            grads.tensor_mut(t).iter_mut().for_each(|g| *g = -*g);
        }
        let mut rng = SplitMix64::new(seed.wrapping_add(0x9d));
        let mut probe = problem.params.clone();
        let loss_at = |p: &ModelParams| total_loss(p, &batch, &banks, &problem.hyper).map(|l| l.total);
        for (slot, id) in TensorId::ALL.into_iter().enumerate() {
            let len = problem.params.tensor(id).len();
            let mut coords: Vec<usize> = (0..len).collect();
            rng.shuffle(&mut coords);
            coords.truncate(opts.coords_per_tensor.min(len));
            for &i in &coords {
                let orig = problem.params.tensor(id)[i];
                probe.tensor_mut(id)[i] = orig + opts.step;
                let up = loss_at(&probe)?;
                probe.tensor_mut(id)[i] = orig - opts.step;
                let down = loss_at(&probe)?;
                probe.tensor_mut(id)[i] = orig;
                let numeric = (up - down) / (2.0 * opts.step);
                let analytic = grads.tensor(id)[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
                worst[slot] = worst[slot].max(rel);
            }
        }
    }
    let cases = opts.seeds.len() * opts.coords_per_tensor;
    Ok(TensorId::ALL
        .into_iter()
        .zip(worst)
        .map(|(id, w)| row(Suite::Gradients, id.name(), w, opts.tolerance, cases))
        .collect())
}

fn random_set(rng: &mut SplitMix64, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| spread * rng.normal()).collect())
        .collect()
}

fn random_bank(rng: &mut SplitMix64) -> Result<KernelBank> {
    let k = 1 + rng.below(5);
    let mut sigmas: Vec<f64> = (0..k).map(|_| rng.uniform(0.2, 4.0)).collect();
    sigmas.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.05, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    KernelBank::new(sigmas, raw.iter().map(|b| b / total).collect())
}

/// MK-MMD against the double-sum oracle, on itself, and under swapping.
pub fn mmd_check(cases: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = SplitMix64::new(seed);
    let (mut oracle_err, mut self_err, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let dim = 1 + rng.below(8);
        let (n_a, n_b) = (1 + rng.below(64), 1 + rng.below(64));
        let a = random_set(&mut rng, n_a, dim, 1.0);
        let b = random_set(&mut rng, n_b, dim, 1.5);
        let bank = random_bank(&mut rng)?;
        let fast = mk_mmd(&a, &b, &bank)?;
        let slow = oracle_mmd(&a, &b, bank.sigmas(), bank.betas());
        oracle_err = oracle_err.max((fast - slow).abs());
        self_err = self_err.max(mk_mmd(&a, &a, &bank)?.abs());
        let swapped = mk_mmd(&b, &a, &bank)?;
        if swapped.to_bits() != fast.to_bits() {
            asym = asym.max((swapped - fast).abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(vec![
        row(Suite::Mmd, "oracle agreement", oracle_err, 1e-10, cases),
        row(Suite::Mmd, "identical sets", self_err, 1e-12, cases),
        row(Suite::Mmd, "exact symmetry", asym, 0.0, cases),
    ])
}

/// Popularity against the naive oracle on small generated corpora, with
/// every third case scored against the zero-shot topic words only.
pub fn popularity_check(cases: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = SplitMix64::new(seed);
    let (mut full_err, mut zero_err) = (0.0f64, 0.0f64);
    let (mut n_full, mut n_zero) = (0, 0);
    for case in 0..cases {
        let spec = SynthSpec {
            n_videos: 1,
            n_source: 4,
            n_labels: 6 + rng.below(10),
            n_topics: 3 + rng.below(4),
            zero_shot_fraction: 0.34,
            d_raw: 4 + rng.below(12),
            d_sem: 3 + rng.below(8),
            seed: rng.next_u64(),
            ..SynthSpec::default()
        };
        let corpus = generate_corpus(&spec)?;
        let dims = ModelDims {
            d_raw: spec.d_raw,
            d_hidden: 4 + rng.below(28),
            d_feat: 4 + rng.below(28),
            d_sem: spec.d_sem,
        };
        let mut params = ModelParams::init(dims, rng.next_u64())?;
        for b in params.adapter_b1.iter_mut().chain(params.adapter_b2.iter_mut()) {
            *b = rng.uniform(-0.2, 0.2);
        }
        let videos = &corpus.videos[0].candidates;
        let feature = &videos[rng.below(videos.len())].feature;
        let zero_shot_only = case % 3 == 0;
        let topics = if zero_shot_only {
            corpus.topics.filtered(|w| corpus.is_zero_shot(w))?
        } else {
            corpus.topics.clone()
        };
        let fast = popularity(&params, &corpus.words, feature, &topics, TopicWeighting::Normalized)?;
        let weighted = weighted_prototypes(&topics, &corpus.words);
        let slow = oracle_popularity(&params, feature, &weighted);
        let err = (fast - slow).abs();
        if zero_shot_only {
            zero_err = zero_err.max(err);
            n_zero += 1;
        } else {
            full_err = full_err.max(err);
            n_full += 1;
        }
    }
    Ok(vec![
        row(Suite::Popularity, "oracle agreement", full_err, 1e-10, n_full),
        row(Suite::Popularity, "zero-shot topics only", zero_err, 1e-10, n_zero),
    ])
}

fn weighted_prototypes(topics: &TopicList, words: &crate::wordspace::WordSpace) -> Vec<(f64, Vec<f64>)> {
    let total: f64 = topics.items().iter().map(|t| t.count as f64).sum();
    topics
        .items()
        .iter()
        .map(|t| {
            let p = words.prototype(&t.word).expect("topic word has a prototype");
            (t.count as f64 / total, p.to_vec())
        })
        .collect()
}

/// Runs the requested suites with their standard sizes.
pub fn run_suites(suites: &[Suite], sabotage: Option<TensorId>) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &s in suites {
        match s {
            Suite::Gradients => rows.extend(gradient_check(&GradCheckOptions {
                sabotage,
                ..GradCheckOptions::default()
            })?),
            Suite::Mmd => rows.extend(mmd_check(100, 11)?),
            Suite::Popularity => rows.extend(popularity_check(100, 13)?),
        }
    }
    Ok(rows)
}
