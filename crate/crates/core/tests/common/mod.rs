//! Naive re-implementations of the forward pass used as test oracles.
#![allow(dead_code)]

use thumbsel::linalg::Matrix;
use thumbsel::model::ModelParams;
use thumbsel::rng::SplitMix64;

pub fn naive_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| {
            let mut acc = 0.0;
            for c in 0..m.cols() {
                acc += m.get(r, c) * x[c];
            }
            acc
        })
        .collect()
}

/// (hidden, feature) computed with index loops.
pub fn naive_adapt(p: &ModelParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut hidden = naive_matvec(&p.adapter_w1, x);
    for (h, b) in hidden.iter_mut().zip(&p.adapter_b1) {
        *h = (*h + b).max(0.0);
    }
    let mut feature = naive_matvec(&p.adapter_w2, &hidden);
    for (v, b) in feature.iter_mut().zip(&p.adapter_b2) {
        *v += b;
    }
    (hidden, feature)
}

pub fn naive_attention(p: &ModelParams, s: &[f64]) -> Vec<f64> {
    naive_matvec(&p.attn_w, s).into_iter().map(|a| a.max(0.0)).collect()
}

/// `s · W_v (a ⊙ v)` as an explicit triple sum.
pub fn naive_score(p: &ModelParams, s: &[f64], a: &[f64], v: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..p.vis_w.rows() {
        for k in 0..p.vis_w.cols() {
            total += s[i] * p.vis_w.get(i, k) * a[k] * v[k];
        }
    }
    total
}

pub fn random_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Parameters with random nonzero biases.
pub fn random_params(dims: thumbsel::model::ModelDims, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(dims, seed).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0xb1a5);
    for b in p.adapter_b1.iter_mut().chain(p.adapter_b2.iter_mut()) {
        *b = rng.uniform(-0.3, 0.3);
    }
    p
}
