//! Literal reference implementations used to cross-check the optimized
//! code paths. Nothing here calls into the model, objective or selector
//! arithmetic; parameters are read entry by entry.

use crate::model::ModelParams;

/// Biased MK-MMD estimate as three explicit double sums.
pub fn oracle_mmd(source: &[Vec<f64>], target: &[Vec<f64>], sigmas: &[f64], betas: &[f64]) -> f64 {
    let kernel = |x: &[f64], y: &[f64]| -> f64 {
        let mut d2 = 0.0;
        for i in 0..x.len() {
            d2 += (x[i] - y[i]) * (x[i] - y[i]);
        }
        let mut k = 0.0;
        for u in 0..sigmas.len() {
            k += betas[u] * (-d2 / (2.0 * sigmas[u] * sigmas[u])).exp();
        }
        k
    };
    let n = source.len() as f64;
    let m = target.len() as f64;
    let mut ss = 0.0;
    for a in source {
        for b in source {
            ss += kernel(a, b);
        }
    }
    let mut tt = 0.0;
    for a in target {
        for b in target {
            tt += kernel(a, b);
        }
    }
    let mut st = 0.0;
    for a in source {
        for b in target {
            st += kernel(a, b);
        }
    }
    ss / (n * n) + tt / (m * m) - 2.0 * st / (n * m)
}

/// Weighted popularity with naive loops: adapter, ReLU attention gate,
/// gating, projection and dot product per topic.
pub fn oracle_popularity(params: &ModelParams, feature: &[f64], topics: &[(f64, Vec<f64>)]) -> f64 {
    let d = params.dims;
    let mut hidden = vec![0.0; d.d_hidden];
    for r in 0..d.d_hidden {
        let mut acc = params.adapter_b1[r];
        for c in 0..d.d_raw {
            acc += params.adapter_w1.get(r, c) * feature[c];
        }
        hidden[r] = if acc > 0.0 { acc } else { 0.0 };
    }
    let mut v = vec![0.0; d.d_feat];
    for r in 0..d.d_feat {
        let mut acc = params.adapter_b2[r];
        for c in 0..d.d_hidden {
            acc += params.adapter_w2.get(r, c) * hidden[c];
        }
        v[r] = acc;
    }
    let mut total = 0.0;
    for (weight, s) in topics {
        let mut gated = vec![0.0; d.d_feat];
        for r in 0..d.d_feat {
            let mut a = 0.0;
            for c in 0..d.d_sem {
                a += params.attn_w.get(r, c) * s[c];
            }
            gated[r] = if a > 0.0 { a * v[r] } else { 0.0 };
        }
        let mut score = 0.0;
        for r in 0..d.d_sem {
            let mut proj = 0.0;
            for c in 0..d.d_feat {
                proj += params.vis_w.get(r, c) * gated[c];
            }
            score += s[r] * proj;
        }
        total += weight * score;
    }
    total
}

/// Fraction of examples whose nearest lifted label prototype (by cosine in
/// raw feature space) is one of the example's labels.
pub fn nearest_prototype_accuracy(lifted: &[(String, Vec<f64>)], examples: &[(Vec<String>, Vec<f64>)]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let mut ab = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for i in 0..a.len() {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        ab / (aa.sqrt() * bb.sqrt())
    };
    let mut hits = 0;
    for (labels, x) in examples {
        let mut best = (f64::NEG_INFINITY, "");
        for (word, p) in lifted {
            let c = cos(p, x);
            if c > best.0 {
                best = (c, word);
            }
        }
        if labels.iter().any(|l| l == best.1) {
            hits += 1;
        }
    }
    hits as f64 / examples.len() as f64
}
