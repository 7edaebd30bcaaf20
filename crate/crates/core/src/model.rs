//! Trainable parameters and forward computations: the feature adapter, the
//! semantic-attention projection, attended gating and bilinear scoring.

use crate::error::{Error, Result};
use crate::linalg::{dot, relu, Matrix};
use crate::rng::SplitMix64;

/// Layer widths of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub d_raw: usize,
    pub d_hidden: usize,
    pub d_feat: usize,
    pub d_sem: usize,
}

impl ModelDims {
    pub const DEFAULT_HIDDEN: usize = 256;

    /// Hidden width 256 and attention/feature width equal to the raw width.
    pub fn with_defaults(d_raw: usize, d_sem: usize) -> Self {
        Self {
            d_raw,
            d_hidden: Self::DEFAULT_HIDDEN,
            d_feat: d_raw,
            d_sem,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_raw == 0 || self.d_hidden == 0 || self.d_feat == 0 || self.d_sem == 0 {
            return Err(Error::invalid(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Identifies one parameter tensor. [`TensorId::ALL`] fixes the canonical
/// order used by checkpoints, optimizers and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorId {
    AdapterW1,
    AdapterB1,
    AdapterW2,
    AdapterB2,
    AttnW,
    VisW,
}

impl TensorId {
    pub const ALL: [TensorId; 6] = [
        TensorId::AdapterW1,
        TensorId::AdapterB1,
        TensorId::AdapterW2,
        TensorId::AdapterB2,
        TensorId::AttnW,
        TensorId::VisW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorId::AdapterW1 => "adapter_w1",
            TensorId::AdapterB1 => "adapter_b1",
            TensorId::AdapterW2 => "adapter_w2",
            TensorId::AdapterB2 => "adapter_b2",
            TensorId::AttnW => "attn_w",
            TensorId::VisW => "vis_w",
        }
    }

    pub fn from_name(name: &str) -> Option<TensorId> {
        TensorId::ALL.into_iter().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// `d_hidden × d_raw`
    pub adapter_w1: Matrix,
    pub adapter_b1: Vec<f64>,
    /// `d_feat × d_hidden`
    pub adapter_w2: Matrix,
    pub adapter_b2: Vec<f64>,
    /// Semantic-attention projection, `d_feat × d_sem`.
    pub attn_w: Matrix,
    /// Visual-semantic projection, `d_sem × d_feat`.
    pub vis_w: Matrix,
}

/// Intermediate activations of the adapter for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Post-ReLU hidden activation.
    pub hidden: Vec<f64>,
    /// Adapter output `v`.
    pub feature: Vec<f64>,
}

fn xavier(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound))
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            adapter_w1: Matrix::zeros(dims.d_hidden, dims.d_raw),
            adapter_b1: vec![0.0; dims.d_hidden],
            adapter_w2: Matrix::zeros(dims.d_feat, dims.d_hidden),
            adapter_b2: vec![0.0; dims.d_feat],
            attn_w: Matrix::zeros(dims.d_feat, dims.d_sem),
            vis_w: Matrix::zeros(dims.d_sem, dims.d_feat),
        }
    }

    /// Xavier-uniform weights (drawn in [`TensorId::ALL`] order, row-major),
    /// zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = SplitMix64::new(seed);
        let adapter_w1 = xavier(&mut rng, dims.d_hidden, dims.d_raw);
        let adapter_w2 = xavier(&mut rng, dims.d_feat, dims.d_hidden);
        let attn_w = xavier(&mut rng, dims.d_feat, dims.d_sem);
        let vis_w = xavier(&mut rng, dims.d_sem, dims.d_feat);
        Ok(Self {
            dims,
            adapter_w1,
            adapter_b1: vec![0.0; dims.d_hidden],
            adapter_w2,
            adapter_b2: vec![0.0; dims.d_feat],
            attn_w,
            vis_w,
        })
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        match id {
            TensorId::AdapterW1 => self.adapter_w1.as_slice(),
            TensorId::AdapterB1 => &self.adapter_b1,
            TensorId::AdapterW2 => self.adapter_w2.as_slice(),
            TensorId::AdapterB2 => &self.adapter_b2,
            TensorId::AttnW => self.attn_w.as_slice(),
            TensorId::VisW => self.vis_w.as_slice(),
        }
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        match id {
            TensorId::AdapterW1 => self.adapter_w1.as_mut_slice(),
            TensorId::AdapterB1 => &mut self.adapter_b1,
            TensorId::AdapterW2 => self.adapter_w2.as_mut_slice(),
            TensorId::AdapterB2 => &mut self.adapter_b2,
            TensorId::AttnW => self.attn_w.as_mut_slice(),
            TensorId::VisW => self.vis_w.as_mut_slice(),
        }
    }

    pub fn is_finite(&self) -> bool {
        TensorId::ALL
            .iter()
            .all(|&t| self.tensor(t).iter().all(|x| x.is_finite()))
    }

    /// `hidden = ReLU(W1·x + b1)`, `v = W2·hidden + b2`.
    pub fn adapt(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.dims.d_raw {
            return Err(Error::shape("raw feature", self.dims.d_raw, x.len()));
        }
        Ok(self.adapt_unchecked(x))
    }

    pub(crate) fn adapt_unchecked(&self, x: &[f64]) -> ForwardTrace {
        let mut hidden = self.adapter_w1.matvec(x);
        for (h, b) in hidden.iter_mut().zip(&self.adapter_b1) {
            *h = relu(*h + b);
        }
        let mut feature = self.adapter_w2.matvec(&hidden);
        for (f, b) in feature.iter_mut().zip(&self.adapter_b2) {
            *f += b;
        }
        ForwardTrace { hidden, feature }
    }

    /// Attention vector `a_w = ReLU(W_a · s_w)`; nonnegative by construction.
    pub fn semantic_attention(&self, s_w: &[f64]) -> Result<Vec<f64>> {
        if s_w.len() != self.dims.d_sem {
            return Err(Error::shape("prototype", self.dims.d_sem, s_w.len()));
        }
        Ok(self.semantic_attention_unchecked(s_w))
    }

    pub(crate) fn semantic_attention_unchecked(&self, s_w: &[f64]) -> Vec<f64> {
        self.attn_w.matvec(s_w).into_iter().map(relu).collect()
    }

    /// Bilinear similarity `s_wᵀ · W_v · v̂_w`.
    pub fn score(&self, s_w: &[f64], attended: &[f64]) -> Result<f64> {
        if s_w.len() != self.dims.d_sem {
            return Err(Error::shape("prototype", self.dims.d_sem, s_w.len()));
        }
        if attended.len() != self.dims.d_feat {
            return Err(Error::shape("attended feature", self.dims.d_feat, attended.len()));
        }
        Ok(dot(s_w, &self.vis_w.matvec(attended)))
    }
}

/// Elementwise gate `v̂_w = a_w ⊗ v`.
pub fn attend(attention: &[f64], feature: &[f64]) -> Result<Vec<f64>> {
    if attention.len() != feature.len() {
        return Err(Error::shape("attention gate", feature.len(), attention.len()));
    }
    Ok(attend_unchecked(attention, feature))
}

pub(crate) fn attend_unchecked(attention: &[f64], feature: &[f64]) -> Vec<f64> {
    attention.iter().zip(feature).map(|(a, v)| a * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            d_raw: 5,
            d_hidden: 7,
            d_feat: 4,
            d_sem: 3,
        }
    }

    fn bits(p: &ModelParams) -> Vec<u64> {
        TensorId::ALL
            .iter()
            .flat_map(|&t| p.tensor(t).iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ModelParams::init(dims(), 42).unwrap();
        let b = ModelParams::init(dims(), 42).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.adapter_b1.iter().all(|&x| x == 0.0));
        assert!(a.adapter_b2.iter().all(|&x| x == 0.0));
        let c = ModelParams::init(dims(), 43).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn xavier_bounds_respected() {
        let p = ModelParams::init(dims(), 1).unwrap();
        let bound = (6.0f64 / (4 + 3) as f64).sqrt();
        assert!(p.attn_w.as_slice().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn xavier_variance() {
        // Uniform(-a, a) has variance a^2 / 3 = 2 / (m + n).
        let d = ModelDims {
            d_raw: 2,
            d_hidden: 2,
            d_feat: 400,
            d_sem: 250,
        };
        let p = ModelParams::init(d, 5).unwrap();
        let xs = p.attn_w.as_slice();
        assert_eq!(xs.len(), 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let expected = 6.0 / (400.0 + 250.0) / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn zero_adapter_gives_zero_feature() {
        let p = ModelParams::zeros(dims());
        let t = p.adapt(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(t.feature, vec![0.0; 4]);
    }

    #[test]
    fn relu_clamps_hidden() {
        let d = ModelDims {
            d_raw: 2,
            d_hidden: 2,
            d_feat: 2,
            d_sem: 2,
        };
        let mut p = ModelParams::zeros(d);
        p.adapter_w1 = Matrix::identity(2);
        let t = p.adapt(&[-1.0, 2.0]).unwrap();
        assert_eq!(t.hidden, vec![0.0, 2.0]);
    }

    #[test]
    fn adapt_rejects_wrong_length() {
        let p = ModelParams::zeros(dims());
        assert!(matches!(p.adapt(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn attention_of_zero_and_all_ones() {
        let mut p = ModelParams::zeros(dims());
        assert_eq!(p.semantic_attention(&[0.0; 3]).unwrap(), vec![0.0; 4]);
        p.attn_w = Matrix::from_fn(4, 3, |_, _| 1.0);
        let s = [0.5, -0.2, 0.4];
        let sigma: f64 = s.iter().sum();
        for a in p.semantic_attention(&s).unwrap() {
            assert_eq!(a, sigma.max(0.0));
        }
        let neg = [-0.5, -0.2, 0.4];
        assert!(p.semantic_attention(&neg).unwrap().iter().all(|&a| a == 0.0));
        assert!(p.semantic_attention(&[1.0]).is_err());
    }

    #[test]
    fn attend_examples() {
        let v = [3.0, 5.0, -4.0];
        assert_eq!(attend(&[1.0; 3], &v).unwrap(), v.to_vec());
        assert_eq!(attend(&[0.0; 3], &v).unwrap(), vec![0.0; 3]);
        assert_eq!(attend(&[2.0, 0.0, 1.0], &v).unwrap(), vec![6.0, 0.0, -4.0]);
        assert!(attend(&[1.0; 2], &v).is_err());
    }

    #[test]
    fn score_examples() {
        let d = ModelDims {
            d_raw: 2,
            d_hidden: 2,
            d_feat: 2,
            d_sem: 2,
        };
        let mut p = ModelParams::zeros(d);
        p.vis_w = Matrix::identity(2);
        assert_eq!(p.score(&[1.0, 0.0], &[0.3, 9.0]).unwrap(), 0.3);
        assert_eq!(p.score(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(p.score(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn tensor_names_round_trip() {
        for t in TensorId::ALL {
            assert_eq!(TensorId::from_name(t.name()), Some(t));
        }
    }
}
