//! Minibatch Adam training of the full objective with best-epoch selection,
//! and cross-validated grid search.

mod config;
mod grid;

pub use config::TrainConfig;
pub use grid::{assign_folds, grid_search, CellResult, Grid, GridReport, GridSearchData};

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::time::Instant;

use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, TensorId};
use crate::objective::{
    loss_and_gradients, Gradients, LayerBanks, LossBreakdown, RankTarget, SourceSample, TrainBatch,
};
use crate::rng::{child_seed, offsets, SplitMix64};
use crate::selector::{evaluate, TopicScorer, VideoRecord};
use crate::wordspace::{TopicList, WordSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            m: Gradients::zeros(dims),
            v: Gradients::zeros(dims),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching the parameters.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.dims() != params.dims || state.m.dims() != params.dims {
        return Err(Error::invalid("gradient or optimizer state shape differs from parameters"));
    }
    if let Some(t) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: t.name().to_string(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for id in TensorId::ALL {
        let g = grads.tensor(id);
        let m = state.m.tensor_mut(id);
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = state.v.tensor_mut(id);
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (state.m.tensor(id), state.v.tensor(id));
        for ((p, mi), vi) in params.tensor_mut(id).iter_mut().zip(m).zip(v) {
            *p -= lr * (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub loss: LossBreakdown,
    pub val_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Per-step totals, kept when `TrainConfig::log_steps` is set.
    pub step_losses: Vec<f64>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,hinge,reg_v,reg_a,mmd,total,val_acc,seconds";

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{:.3}",
                r.epoch,
                r.loss.csv_fields(),
                r.val_acc,
                r.seconds
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation accuracy (ties go to
    /// the earlier epoch); the initial parameters when no epoch ran.
    pub params: ModelParams,
    pub best_epoch: Option<usize>,
    pub history: TrainHistory,
}

/// Inputs to one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub words: &'a WordSpace,
    pub topics: &'a TopicList,
    pub source: &'a [LabeledExample],
    /// Unlabeled target-domain features for the MMD penalty.
    pub target: &'a [Vec<f64>],
    pub valid: &'a [VideoRecord],
}

/// Label vocabulary of a source corpus with prototypes, in sorted order.
struct Vocabulary {
    prototypes: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn build(words: &WordSpace, source: &[LabeledExample]) -> Result<Self> {
        let labels: BTreeSet<&str> = source.iter().flat_map(|e| e.labels.iter().map(String::as_str)).collect();
        let mut prototypes = Vec::with_capacity(labels.len());
        let mut index = HashMap::new();
        for label in labels {
            let p = words
                .prototype(label)
                .ok_or_else(|| Error::invalid(format!("training label '{label}' has no word vector")))?;
            index.insert(label.to_string(), prototypes.len());
            prototypes.push(p.to_vec());
        }
        Ok(Self { prototypes, index })
    }
}

/// For each positive label, `n_neg` distinct negatives from the vocabulary
/// minus the example's positives (all of them when fewer remain).
fn sample_targets(rng: &mut SplitMix64, positives: &[usize], vocab_size: usize, n_neg: usize) -> Vec<RankTarget> {
    let pool: Vec<usize> = (0..vocab_size).filter(|i| !positives.contains(i)).collect();
    positives
        .iter()
        .map(|&p| {
            let mut pool = pool.clone();
            let take = n_neg.min(pool.len());
            // Partial Fisher-Yates: the first `take` slots become the sample.
            for i in 0..take {
                let j = i + rng.below(pool.len() - i);
                pool.swap(i, j);
            }
            pool.truncate(take);
            RankTarget {
                positive: p,
                negatives: pool,
            }
        })
        .collect()
}

fn validation_accuracy(params: &ModelParams, data: &TrainData<'_>, config: &TrainConfig) -> Result<f64> {
    let scorer = TopicScorer::new(params, data.words, data.topics, config.weighting)?;
    Ok(evaluate(&scorer, data.valid, config.lambda)?.accuracy)
}

fn mean_breakdown(sum: &LossBreakdown, n: usize) -> LossBreakdown {
    let n = n.max(1) as f64;
    LossBreakdown {
        hinge: sum.hinge / n,
        reg_v: sum.reg_v / n,
        reg_a: sum.reg_a / n,
        mmd: sum.mmd / n,
        total: sum.total / n,
    }
}

/// Seeded hold-out of `round(fraction · n)` videos (at least one, at most
/// n − 1). Returns `(fit, valid)`, each in input order.
pub fn split_validation(
    videos: &[VideoRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<VideoRecord>, Vec<VideoRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    if videos.len() < 2 {
        return Err(Error::invalid("need at least two videos to hold out a validation set"));
    }
    let n_valid = ((fraction * videos.len() as f64).round() as usize).clamp(1, videos.len() - 1);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    SplitMix64::new(child_seed(seed, offsets::VALID_SPLIT)).shuffle(&mut order);
    let mut is_valid = vec![false; videos.len()];
    for &i in &order[..n_valid] {
        is_valid[i] = true;
    }
    let (valid, fit): (Vec<_>, Vec<_>) = videos.iter().cloned().zip(is_valid).partition(|(_, v)| *v);
    Ok((
        fit.into_iter().map(|(v, _)| v).collect(),
        valid.into_iter().map(|(v, _)| v).collect(),
    ))
}

pub fn train(config: &TrainConfig, data: &TrainData<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    if data.source.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if data.valid.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    if config.hyper.mu > 0.0 && data.target.is_empty() {
        return Err(Error::invalid("MMD weight is positive but no target features were given"));
    }
    let d_raw = data.source[0].feature.len();
    if let Some(e) = data.source.iter().find(|e| e.feature.len() != d_raw) {
        return Err(Error::shape(format!("source feature {}", e.id), d_raw, e.feature.len()));
    }
    if let Some(d_sem) = config.d_sem {
        if d_sem != data.words.dim() {
            return Err(Error::shape("semantic dimension", d_sem, data.words.dim()));
        }
    }
    let vocab = Vocabulary::build(data.words, data.source)?;
    let positives: Vec<Vec<usize>> = data
        .source
        .iter()
        .map(|e| {
            let mut ids: Vec<usize> = e.labels.iter().map(|l| vocab.index[l.as_str()]).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect();

    let dims = ModelDims {
        d_raw,
        d_hidden: config.d_hidden,
        d_feat: config.d_feat.unwrap_or(d_raw),
        d_sem: data.words.dim(),
    };
    let mut params = ModelParams::init(dims, child_seed(config.seed, offsets::INIT))?;
    let mut history = TrainHistory::default();
    if config.max_epochs == 0 {
        return Ok(TrainOutcome {
            params,
            best_epoch: None,
            history,
        });
    }

    let mut shuffle_rng = SplitMix64::new(child_seed(config.seed, offsets::SHUFFLE));
    let mut neg_rng = SplitMix64::new(child_seed(config.seed, offsets::NEGATIVES));
    let mut target_order: Vec<usize> = (0..data.target.len()).collect();
    SplitMix64::new(child_seed(config.seed, offsets::TARGET)).shuffle(&mut target_order);
    let mut target_cursor = 0usize;
    let mut adam = AdamState::new(dims);
    let mut order: Vec<usize> = (0..data.source.len()).collect();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut sum = LossBreakdown::default();
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let source: Vec<SourceSample<'_>> = chunk
                .iter()
                .map(|&i| SourceSample {
                    feature: &data.source[i].feature,
                    targets: sample_targets(&mut neg_rng, &positives[i], vocab.prototypes.len(), config.n_neg),
                })
                .collect();
            let target: Vec<&[f64]> = if config.hyper.mu > 0.0 {
                (0..chunk.len())
                    .map(|_| {
                        let idx = target_order[target_cursor % target_order.len()];
                        target_cursor = (target_cursor + 1) % target_order.len();
                        data.target[idx].as_slice()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let batch = TrainBatch {
                prototypes: &vocab.prototypes,
                source,
                target,
            };
            let banks = if config.hyper.mu > 0.0 {
                LayerBanks::median_heuristic(&params, &batch)?
            } else {
                LayerBanks::uniform(crate::objective::KernelBank::single(1.0)?)
            };
            let (loss, grads) = loss_and_gradients(&params, &batch, &banks, &config.hyper)?;
            adam_step(&mut params, &grads, &mut adam, config.learning_rate, &config.adam)?;
            if config.log_steps {
                history.step_losses.push(loss.total);
            }
            sum.hinge += loss.hinge;
            sum.reg_v += loss.reg_v;
            sum.reg_a += loss.reg_a;
            sum.mmd += loss.mmd;
            sum.total += loss.total;
            steps += 1;
        }
        let val_acc = validation_accuracy(&params, data, config)?;
        let seconds = if config.wall_clock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let loss = mean_breakdown(&sum, steps);
        log::info!(
            "epoch {epoch}: total {:.5} hinge {:.5} mmd {:.5} val_acc {:.4}",
            loss.total,
            loss.hinge,
            loss.mmd,
            val_acc
        );
        history.epochs.push(EpochRecord {
            epoch,
            loss,
            val_acc,
            seconds,
        });
        if best.as_ref().map_or(true, |(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch: Some(best_epoch),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_dims() -> ModelDims {
        ModelDims {
            d_raw: 1,
            d_hidden: 1,
            d_feat: 1,
            d_sem: 1,
        }
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let dims = ModelDims {
            d_raw: 3,
            d_hidden: 4,
            d_feat: 3,
            d_sem: 2,
        };
        let mut params = ModelParams::init(dims, 1).unwrap();
        let before = params.clone();
        let mut state = AdamState::new(dims);
        for _ in 0..10 {
            adam_step(&mut params, &Gradients::zeros(dims), &mut state, 0.01, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = ModelParams::zeros(scalar_dims());
        let mut grads = Gradients::zeros(scalar_dims());
        grads.tensor_mut(TensorId::VisW)[0] = 1.0;
        let mut state = AdamState::new(scalar_dims());
        let cfg = AdamConfig::default();
        adam_step(&mut params, &grads, &mut state, 1e-3, &cfg).unwrap();
        let expected = -1e-3 / (1.0 + cfg.eps);
        assert!((params.vis_w.get(0, 0) - expected).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut params = ModelParams::zeros(scalar_dims());
        let mut grads = Gradients::zeros(scalar_dims());
        grads.tensor_mut(TensorId::AttnW)[0] = f64::NAN;
        let mut state = AdamState::new(scalar_dims());
        match adam_step(&mut params, &grads, &mut state, 1e-3, &AdamConfig::default()) {
            Err(Error::NonFinite { tensor }) => assert_eq!(tensor, "attn_w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn descends_quadratic_bowl() {
        // f(w) = (w0 - 3)² + 2(w1 + 1)² on the two bias entries.
        let dims = ModelDims {
            d_raw: 1,
            d_hidden: 2,
            d_feat: 1,
            d_sem: 1,
        };
        let mut params = ModelParams::zeros(dims);
        let target = [3.0, -1.0];
        let dist = |p: &ModelParams| {
            ((p.adapter_b1[0] - target[0]).powi(2) + (p.adapter_b1[1] - target[1]).powi(2)).sqrt()
        };
        let initial = dist(&params);
        let mut state = AdamState::new(dims);
        for _ in 0..100 {
            let mut g = Gradients::zeros(dims);
            let b = &params.adapter_b1;
            g.tensor_mut(TensorId::AdapterB1).copy_from_slice(&[2.0 * (b[0] - 3.0), 4.0 * (b[1] + 1.0)]);
            adam_step(&mut params, &g, &mut state, 0.05, &AdamConfig::default()).unwrap();
        }
        assert!(dist(&params) < initial);
    }

    #[test]
    fn negatives_exclude_positives() {
        let mut rng = SplitMix64::new(2);
        let targets = sample_targets(&mut rng, &[1, 4], 8, 10);
        assert_eq!(targets.len(), 2);
        for t in &targets {
            assert_eq!(t.negatives.len(), 6);
            assert!(!t.negatives.contains(&1) && !t.negatives.contains(&4));
        }
        let few = sample_targets(&mut rng, &[0], 20, 5);
        assert_eq!(few[0].negatives.len(), 5);
        let mut sorted = few[0].negatives.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }
}
