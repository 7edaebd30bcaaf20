//! K-fold grid search over training and fusion hyperparameters, with one
//! refinement pass at half the coarse step around the winner.

use std::io::Write;

use rayon::prelude::*;

use crate::config::{format_list, parse_list, parse_value};
use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::rng::{child_seed, offsets, SplitMix64};
use crate::selector::{evaluate, mean_std, TopicScorer, VideoRecord};
use crate::synthgen::target_pool;
use crate::wordspace::{TopicList, WordSpace};

use super::{train, TrainConfig, TrainData};

/// Candidate values per axis. `d_feats` entries of `None` mean the raw
/// feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub d_feats: Vec<Option<usize>>,
    pub folds: usize,
    pub refine: bool,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            batch_sizes: vec![128, 256, 512],
            learning_rates: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
            alphas: vec![0.5],
            lambdas: vec![0.2],
            d_feats: vec![None],
            folds: 5,
            refine: true,
        }
    }
}

impl Grid {
    /// A grid holding exactly the values of `cfg`.
    pub fn single(cfg: &TrainConfig) -> Self {
        Self {
            batch_sizes: vec![cfg.batch_size],
            learning_rates: vec![cfg.learning_rate],
            alphas: vec![cfg.hyper.alpha],
            lambdas: vec![cfg.lambda],
            d_feats: vec![cfg.d_feat],
            folds: 5,
            refine: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty()
            || self.learning_rates.is_empty()
            || self.alphas.is_empty()
            || self.lambdas.is_empty()
            || self.d_feats.is_empty()
        {
            return Err(Error::invalid("every grid axis needs at least one value"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("grid search needs at least 2 folds"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.batch_sizes.len() * self.learning_rates.len() * self.alphas.len() * self.lambdas.len() * self.d_feats.len()
    }

    /// Sets one `grid.*` key (prefix already stripped).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let full = format!("grid.{key}");
        match key {
            "batch_size" => self.batch_sizes = parse_list(&full, value)?,
            "learning_rate" => self.learning_rates = parse_list(&full, value)?,
            "alpha" => self.alphas = parse_list(&full, value)?,
            "lambda" => self.lambdas = parse_list(&full, value)?,
            "d_feat" => {
                self.d_feats = value
                    .split(',')
                    .map(|v| match v.trim() {
                        "auto" => Ok(None),
                        v => parse_value(&full, v).map(Some),
                    })
                    .collect::<Result<_>>()?
            }
            "folds" => self.folds = parse_value(&full, value)?,
            "refine" => self.refine = parse_value(&full, value)?,
            _ => return Err(Error::invalid(format!("unknown config key '{full}'"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let d_feats: Vec<String> = self
            .d_feats
            .iter()
            .map(|d| d.map_or_else(|| "auto".to_string(), |d| d.to_string()))
            .collect();
        vec![
            ("batch_size".into(), format_list(&self.batch_sizes)),
            ("learning_rate".into(), format_list(&self.learning_rates)),
            ("alpha".into(), format_list(&self.alphas)),
            ("lambda".into(), format_list(&self.lambdas)),
            ("d_feat".into(), d_feats.join(",")),
            ("folds".into(), self.folds.to_string()),
            ("refine".into(), self.refine.to_string()),
        ]
    }

    fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.n_cells());
        for &batch_size in &self.batch_sizes {
            for &learning_rate in &self.learning_rates {
                for &alpha in &self.alphas {
                    for &lambda in &self.lambdas {
                        for &d_feat in &self.d_feats {
                            let mut c = *base;
                            c.batch_size = batch_size;
                            c.learning_rate = learning_rate;
                            c.hyper.alpha = alpha;
                            c.lambda = lambda;
                            c.d_feat = d_feat;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }

    /// Neighbourhood of `winner` at half the coarse spacing on each axis.
    fn refined_around(&self, winner: &TrainConfig) -> Self {
        fn around(values: &[f64], w: f64) -> Vec<f64> {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let i = sorted.iter().position(|&v| v == w).unwrap_or(0);
            let mut out = Vec::with_capacity(3);
            if i > 0 {
                out.push(0.5 * (sorted[i - 1] + w));
            }
            out.push(w);
            if i + 1 < sorted.len() {
                out.push(0.5 * (w + sorted[i + 1]));
            }
            out
        }
        let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let to_usize = |v: Vec<f64>| {
            let mut out: Vec<usize> = v.into_iter().map(|x| x.round() as usize).collect();
            out.dedup();
            out
        };
        let d_feats = match winner.d_feat {
            Some(d) if self.d_feats.iter().all(Option::is_some) => {
                let known: Vec<usize> = self.d_feats.iter().flatten().copied().collect();
                to_usize(around(&as_f64(&known), d as f64)).into_iter().map(Some).collect()
            }
            other => vec![other],
        };
        Self {
            batch_sizes: to_usize(around(&as_f64(&self.batch_sizes), winner.batch_size as f64)),
            learning_rates: around(&self.learning_rates, winner.learning_rate),
            alphas: around(&self.alphas, winner.hyper.alpha),
            lambdas: around(&self.lambdas, winner.lambda),
            d_feats,
            folds: self.folds,
            refine: false,
        }
    }
}

/// Everything grid search draws on. Videos must carry ground truth.
#[derive(Debug, Clone, Copy)]
pub struct GridSearchData<'a> {
    pub words: &'a WordSpace,
    pub topics: &'a TopicList,
    pub source: &'a [LabeledExample],
    pub videos: &'a [VideoRecord],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: TrainConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Added by the refinement pass.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub cells: Vec<CellResult>,
    /// Index into `cells`; ties go to the earlier cell.
    pub best: usize,
}

impl GridReport {
    pub const CSV_HEADER: &'static str = "stage,batch_size,learning_rate,alpha,lambda,d_feat,mean_acc,std_acc,fold_accs";

    pub fn best_config(&self) -> &TrainConfig {
        &self.cells[self.best].config
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            let folds: Vec<String> = c.fold_accuracies.iter().map(|a| a.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                if c.refined { "refine" } else { "coarse" },
                c.config.batch_size,
                c.config.learning_rate,
                c.config.hyper.alpha,
                c.config.lambda,
                c.config.d_feat.map_or_else(|| "auto".to_string(), |d| d.to_string()),
                c.mean,
                c.std,
                folds.join("|")
            )?;
        }
        Ok(())
    }
}

/// Fold index per video from a seeded shuffle of the video ids.
pub fn assign_folds(videos: &[VideoRecord], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if videos.len() < folds {
        return Err(Error::invalid(format!(
            "{} videos cannot be split into {folds} folds",
            videos.len()
        )));
    }
    let mut ids: Vec<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate video id in grid search data"));
    }
    SplitMix64::new(child_seed(seed, offsets::FOLDS)).shuffle(&mut ids);
    let fold_of: std::collections::HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (*id, i % folds)).collect();
    Ok(videos.iter().map(|v| fold_of[v.video_id.as_str()]).collect())
}

struct FoldSplit {
    fit: Vec<VideoRecord>,
    held_out: Vec<VideoRecord>,
    target: Vec<Vec<f64>>,
}

/// Trains on the source corpus with the fitting folds as target pool and
/// epoch-selection set, then scores the held-out fold.
fn run_cell_fold(cfg: &TrainConfig, data: &GridSearchData<'_>, split: &FoldSplit, fold: usize) -> Result<f64> {
    let mut cfg = *cfg;
    cfg.seed = child_seed(cfg.seed, offsets::GRID_CELL + fold as u64);
    let outcome = train(
        &cfg,
        &TrainData {
            words: data.words,
            topics: data.topics,
            source: data.source,
            target: &split.target,
            valid: &split.fit,
        },
    )?;
    let scorer = TopicScorer::new(&outcome.params, data.words, data.topics, cfg.weighting)?;
    Ok(evaluate(&scorer, &split.held_out, cfg.lambda)?.accuracy)
}

fn evaluate_cells(
    cells: Vec<TrainConfig>,
    data: &GridSearchData<'_>,
    splits: &[FoldSplit],
    refined: bool,
) -> Result<Vec<CellResult>> {
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..splits.len()).map(move |f| (c, f)))
        .collect();
    let accs: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| run_cell_fold(&cells[c], data, &splits[f], f))
        .collect::<Result<_>>()?;
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(c, config)| {
            let fold_accuracies = accs[c * splits.len()..(c + 1) * splits.len()].to_vec();
            let (mean, std) = mean_std(&fold_accuracies);
            log::info!(
                "grid cell bs={} lr={} alpha={} lambda={}: {:.4} ± {:.4}",
                config.batch_size,
                config.learning_rate,
                config.hyper.alpha,
                config.lambda,
                mean,
                std
            );
            CellResult {
                config,
                fold_accuracies,
                mean,
                std,
                refined,
            }
        })
        .collect())
}

fn argmax(cells: &[CellResult]) -> usize {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean > cells[best].mean {
            best = i;
        }
    }
    best
}

/// Cross-validated search. Each cell trains `grid.folds` models whose seeds
/// depend only on `base.seed` and the fold index, so cells are compared on
/// identical randomness.
pub fn grid_search(grid: &Grid, base: &TrainConfig, data: &GridSearchData<'_>) -> Result<GridReport> {
    grid.validate()?;
    base.validate()?;
    if data.videos.iter().any(|v| v.ground_truth.is_none()) {
        return Err(Error::MissingGroundTruth("grid search videos".into()));
    }
    let fold_of = assign_folds(data.videos, grid.folds, base.seed)?;
    let splits: Vec<FoldSplit> = (0..grid.folds)
        .map(|f| {
            let (held_out, fit): (Vec<_>, Vec<_>) = data
                .videos
                .iter()
                .zip(&fold_of)
                .partition(|(_, &k)| k == f);
            let fit: Vec<VideoRecord> = fit.into_iter().map(|(v, _)| v.clone()).collect();
            let held_out: Vec<VideoRecord> = held_out.into_iter().map(|(v, _)| v.clone()).collect();
            FoldSplit {
                target: target_pool(&fit),
                fit,
                held_out,
            }
        })
        .collect();

    let mut cells = evaluate_cells(grid.cells(base), data, &splits, false)?;
    if grid.refine {
        let winner = cells[argmax(&cells)].config;
        let extra: Vec<TrainConfig> = grid
            .refined_around(&winner)
            .cells(base)
            .into_iter()
            .filter(|c| !cells.iter().any(|e| e.config == *c))
            .collect();
        if !extra.is_empty() {
            cells.extend(evaluate_cells(extra, data, &splits, true)?);
        }
    }
    let best = argmax(&cells);
    Ok(GridReport { cells, best })
}
