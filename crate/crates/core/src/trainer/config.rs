//! Training configuration.

use crate::config::parse_value;
use crate::error::{Error, Result};
use crate::objective::Hyper;
use crate::selector::{TopicWeighting, DEFAULT_LAMBDA};

use super::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub hyper: Hyper,
    pub d_hidden: usize,
    /// Adapter output width; the raw feature width when unset.
    pub d_feat: Option<usize>,
    /// Expected word-vector width; checked against the loaded vectors.
    pub d_sem: Option<usize>,
    /// Negatives sampled per positive label.
    pub n_neg: usize,
    /// Fusion weight used for validation accuracy.
    pub lambda: f64,
    pub weighting: TopicWeighting,
    pub adam: AdamConfig,
    /// Record elapsed seconds per epoch; zeros keep logs byte-reproducible.
    pub wall_clock: bool,
    /// Keep per-step total losses in the history.
    pub log_steps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 5e-3,
            max_epochs: 30,
            seed: 7,
            hyper: Hyper::default(),
            d_hidden: 256,
            d_feat: None,
            d_sem: None,
            n_neg: 10,
            lambda: DEFAULT_LAMBDA,
            weighting: TopicWeighting::Normalized,
            adam: AdamConfig::default(),
            wall_clock: true,
            log_steps: false,
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("invalid training config: {what}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate >= 0.0,
            "learning_rate must be finite and non-negative",
        )?;
        check(h.alpha.is_finite() && h.alpha > 0.0, "alpha must be positive")?;
        check(h.eta.is_finite() && h.eta >= 0.0, "eta must be non-negative")?;
        check(h.gamma.is_finite() && h.gamma >= 0.0, "gamma must be non-negative")?;
        check(h.mu.is_finite() && h.mu >= 0.0, "mu must be non-negative")?;
        check(self.d_hidden > 0, "d_hidden must be positive")?;
        check(self.d_feat != Some(0), "d_feat must be positive")?;
        check(self.d_sem != Some(0), "d_sem must be positive")?;
        check(self.n_neg > 0, "n_neg must be positive")?;
        check(self.lambda.is_finite() && self.lambda >= 0.0, "lambda must be non-negative")?;
        let a = &self.adam;
        check((0.0..1.0).contains(&a.beta1), "adam.beta1 must lie in [0, 1)")?;
        check((0.0..1.0).contains(&a.beta2), "adam.beta2 must lie in [0, 1)")?;
        check(a.eps > 0.0, "adam.eps must be positive")?;
        Ok(())
    }

    /// Sets one key; `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let opt_dim = |v: &str| -> Result<Option<usize>> {
            if v == "auto" {
                Ok(None)
            } else {
                parse_value(key, v).map(Some)
            }
        };
        match key {
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "alpha" => self.hyper.alpha = parse_value(key, value)?,
            "eta" => self.hyper.eta = parse_value(key, value)?,
            "gamma" => self.hyper.gamma = parse_value(key, value)?,
            "mu" => self.hyper.mu = parse_value(key, value)?,
            "loss.attend_negatives" => self.hyper.attend_negatives = parse_value(key, value)?,
            "d_hidden" => self.d_hidden = parse_value(key, value)?,
            "d_feat" => self.d_feat = opt_dim(value)?,
            "d_sem" => self.d_sem = opt_dim(value)?,
            "n_neg" => self.n_neg = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "popularity.raw_counts" => {
                self.weighting = if parse_value::<bool>(key, value)? {
                    TopicWeighting::RawCounts
                } else {
                    TopicWeighting::Normalized
                }
            }
            "adam.beta1" => self.adam.beta1 = parse_value(key, value)?,
            "adam.beta2" => self.adam.beta2 = parse_value(key, value)?,
            "adam.eps" => self.adam.eps = parse_value(key, value)?,
            "log.wall_clock" => self.wall_clock = parse_value(key, value)?,
            "log.steps" => self.log_steps = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let dim = |d: Option<usize>| d.map_or_else(|| "auto".to_string(), |d| d.to_string());
        let pairs: [(&str, String); 20] = [
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.hyper.alpha.to_string()),
            ("eta", self.hyper.eta.to_string()),
            ("gamma", self.hyper.gamma.to_string()),
            ("mu", self.hyper.mu.to_string()),
            ("loss.attend_negatives", self.hyper.attend_negatives.to_string()),
            ("d_hidden", self.d_hidden.to_string()),
            ("d_feat", dim(self.d_feat)),
            ("d_sem", dim(self.d_sem)),
            ("n_neg", self.n_neg.to_string()),
            ("lambda", self.lambda.to_string()),
            (
                "popularity.raw_counts",
                (self.weighting == TopicWeighting::RawCounts).to_string(),
            ),
            ("adam.beta1", self.adam.beta1.to_string()),
            ("adam.beta2", self.adam.beta2.to_string()),
            ("adam.eps", self.adam.eps.to_string()),
            ("log.wall_clock", self.wall_clock.to_string()),
            ("log.steps", self.log_steps.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
