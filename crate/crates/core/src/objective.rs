//! Training objective: multi-label hinge rank loss with Frobenius
//! regularizers plus a multi-kernel MMD penalty at the adapter's hidden and
//! output layers, with exact analytic gradients.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sq_dist, Matrix};
use crate::model::{attend_unchecked, ForwardTrace, ModelDims, ModelParams, TensorId};
use crate::wordspace::WordSpace;

/// Convex combination of Gaussian kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    sigmas: Vec<f64>,
    betas: Vec<f64>,
}

impl KernelBank {
    /// Multipliers applied to the base bandwidth by [`KernelBank::ladder`].
    pub const LADDER: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

    pub fn new(sigmas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.len() != betas.len() {
            return Err(Error::invalid(format!(
                "kernel bank needs matching nonempty sigmas/betas ({} vs {})",
                sigmas.len(),
                betas.len()
            )));
        }
        if sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("kernel bandwidths must be positive and finite"));
        }
        if sigmas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("kernel bandwidths must be sorted ascending"));
        }
        if betas.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::invalid("kernel coefficients must be nonnegative"));
        }
        let total: f64 = betas.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("kernel coefficients sum to {total}, not 1")));
        }
        Ok(Self { sigmas, betas })
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma], vec![1.0])
    }

    /// Five bandwidths `base · {1/4, 1/2, 1, 2, 4}` with uniform weights.
    pub fn ladder(base: f64) -> Result<Self> {
        let m = Self::LADDER.len();
        Self::new(
            Self::LADDER.iter().map(|k| k * base).collect(),
            vec![1.0 / m as f64; m],
        )
    }

    /// [`KernelBank::ladder`] around the median pairwise distance of `points`.
    /// Falls back to a unit base when every point coincides.
    pub fn median_heuristic<V: AsRef<[f64]>>(points: &[V]) -> Result<Self> {
        let mut dists = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                dists.push(sq_dist(points[i].as_ref(), points[j].as_ref()).sqrt());
            }
        }
        let base = if dists.is_empty() {
            1.0
        } else {
            let mid = dists.len() / 2;
            let (_, m, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            *m
        };
        Self::ladder(if base > 0.0 { base } else { 1.0 })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn eval_sq(&self, d2: f64) -> f64 {
        self.sigmas
            .iter()
            .zip(&self.betas)
            .map(|(s, b)| b * (-d2 / (2.0 * s * s)).exp())
            .sum()
    }

    /// `(k, c)` where `∂k/∂x = -(x - y) · c`.
    fn eval_sq_with_slope(&self, d2: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut c = 0.0;
        for (s, b) in self.sigmas.iter().zip(&self.betas) {
            let s2 = s * s;
            let ku = b * (-d2 / (2.0 * s2)).exp();
            k += ku;
            c += ku / s2;
        }
        (k, c)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_sq(sq_dist(x, y))
    }
}

/// `exp(-‖x - y‖² / (2σ²))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if x.len() != y.len() {
        return Err(Error::shape("kernel arguments", x.len(), y.len()));
    }
    Ok((-sq_dist(x, y) / (2.0 * sigma * sigma)).exp())
}

fn check_sets<V: AsRef<[f64]>>(source: &[V], target: &[V]) -> Result<usize> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("MMD needs nonempty source and target sets"));
    }
    let dim = source[0].as_ref().len();
    for v in source.iter().chain(target) {
        if v.as_ref().len() != dim {
            return Err(Error::shape("MMD sample", dim, v.as_ref().len()));
        }
    }
    Ok(dim)
}

fn within_sum<V: AsRef<[f64]>>(set: &[V], bank: &KernelBank) -> f64 {
    let mut total = 0.0;
    for (i, a) in set.iter().enumerate() {
        // k(x, x) = 1 for every normalized bank.
        total += 1.0;
        for b in &set[i + 1..] {
            total += 2.0 * bank.eval(a.as_ref(), b.as_ref());
        }
    }
    total
}

/// Total order on sample sets so the cross term is summed in the same order
/// whichever set is passed first; makes the estimate exactly symmetric.
fn set_order<V: AsRef<[f64]>>(a: &[V], b: &[V]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flat_map(|v| v.as_ref().iter())
            .zip(b.iter().flat_map(|v| v.as_ref().iter()))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Biased (V-statistic) squared MK-MMD between two sample sets.
pub fn mk_mmd<V: AsRef<[f64]>>(source: &[V], target: &[V], bank: &KernelBank) -> Result<f64> {
    check_sets(source, target)?;
    let (first, second) = match set_order(source, target) {
        Ordering::Greater => (target, source),
        _ => (source, target),
    };
    let n = source.len() as f64;
    let m = target.len() as f64;
    let mut cross = 0.0;
    for a in first {
        for b in second {
            cross += bank.eval(a.as_ref(), b.as_ref());
        }
    }
    let ss = within_sum(source, bank) / (n * n);
    let tt = within_sum(target, bank) / (m * m);
    Ok(ss + tt - 2.0 * cross / (n * m))
}

/// MMD value and its gradient with respect to every sample.
fn mk_mmd_with_grad(
    source: &[&[f64]],
    target: &[&[f64]],
    bank: &KernelBank,
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = source.len();
    let m = target.len();
    let dim = source[0].len();
    let (nf, mf) = (n as f64, m as f64);
    let mut gs = vec![vec![0.0; dim]; n];
    let mut gt = vec![vec![0.0; dim]; m];
    let mut diff = vec![0.0; dim];

    let mut within = |set: &[&[f64]], grads: &mut [Vec<f64>], scale: f64| -> f64 {
        let mut total = set.len() as f64;
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                for (d, (x, y)) in diff.iter_mut().zip(set[i].iter().zip(set[j])) {
                    *d = x - y;
                }
                let (k, c) = bank.eval_sq_with_slope(dot(&diff, &diff));
                total += 2.0 * k;
                // d/dx_i of 2k(x_i, x_j) · scale, and the mirror for x_j.
                let g = -2.0 * scale * c;
                axpy(g, &diff, &mut grads[i]);
                axpy(-g, &diff, &mut grads[j]);
            }
        }
        total * scale
    };
    let ss = within(source, &mut gs, 1.0 / (nf * nf));
    let tt = within(target, &mut gt, 1.0 / (mf * mf));

    let cross_scale = 2.0 / (nf * mf);
    let mut cross = 0.0;
    for (i, s) in source.iter().enumerate() {
        for (j, t) in target.iter().enumerate() {
            for (d, (x, y)) in diff.iter_mut().zip(s.iter().zip(t.iter())) {
                *d = x - y;
            }
            let (k, c) = bank.eval_sq_with_slope(dot(&diff, &diff));
            cross += k;
            // -cross_scale · k(s, t): d/ds = cross_scale · c · (s - t)
            axpy(cross_scale * c, &diff, &mut gs[i]);
            axpy(-cross_scale * c, &diff, &mut gt[j]);
        }
    }
    (ss + tt - cross_scale * cross, gs, gt)
}

/// Loss weights and options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Ranking margin.
    pub alpha: f64,
    /// Weight decay on `vis_w`.
    pub eta: f64,
    /// Weight decay on `attn_w`.
    pub gamma: f64,
    /// MMD penalty weight.
    pub mu: f64,
    /// Score negatives with the feature attended toward the negative word
    /// instead of the positive word.
    pub attend_negatives: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            eta: 3e-2,
            gamma: 3e-2,
            mu: 0.25,
            attend_negatives: true,
        }
    }
}

/// One positive word with the negatives it is ranked against, as indices
/// into the batch prototype table.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTarget {
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample<'a> {
    pub feature: &'a [f64],
    pub targets: Vec<RankTarget>,
}

/// Labeled source minibatch paired with an unlabeled target minibatch.
#[derive(Debug, Clone)]
pub struct TrainBatch<'a> {
    pub prototypes: &'a [Vec<f64>],
    pub source: Vec<SourceSample<'a>>,
    pub target: Vec<&'a [f64]>,
}

/// Kernel banks for the two MMD tap points.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBanks {
    pub hidden: KernelBank,
    pub feature: KernelBank,
}

impl LayerBanks {
    pub fn uniform(bank: KernelBank) -> Self {
        Self {
            hidden: bank.clone(),
            feature: bank,
        }
    }

    /// Median-heuristic ladders from the current activations of the combined
    /// source and target batch. The bandwidths are treated as constants by
    /// [`gradients`].
    pub fn median_heuristic(params: &ModelParams, batch: &TrainBatch<'_>) -> Result<Self> {
        let traces: Vec<ForwardTrace> = batch
            .source
            .iter()
            .map(|s| s.feature)
            .chain(batch.target.iter().copied())
            .map(|x| params.adapt(x))
            .collect::<Result<_>>()?;
        let hidden: Vec<&[f64]> = traces.iter().map(|t| t.hidden.as_slice()).collect();
        let feature: Vec<&[f64]> = traces.iter().map(|t| t.feature.as_slice()).collect();
        Ok(Self {
            hidden: KernelBank::median_heuristic(&hidden)?,
            feature: KernelBank::median_heuristic(&feature)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub hinge: f64,
    pub reg_v: f64,
    pub reg_a: f64,
    pub mmd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "hinge,reg_v,reg_a,mmd,total";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.hinge, self.reg_v, self.reg_a, self.mmd, self.total
        )
    }
}

/// One gradient tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(ModelParams);

impl Gradients {
    pub fn zeros(dims: ModelDims) -> Self {
        Gradients(ModelParams::zeros(dims))
    }

    pub fn dims(&self) -> ModelDims {
        self.0.dims
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        self.0.tensor(id)
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        self.0.tensor_mut(id)
    }

    /// First tensor containing a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<TensorId> {
        TensorId::ALL
            .into_iter()
            .find(|&t| self.tensor(t).iter().any(|x| !x.is_finite()))
    }
}

/// Hinge sum for one feature over explicit `(positive, negatives)` pairs,
/// without regularizers.
fn sample_hinge(
    params: &ModelParams,
    feature: &[f64],
    prototypes: &[Vec<f64>],
    targets: &[RankTarget],
    alpha: f64,
    attend_negatives: bool,
) -> f64 {
    let mut loss = 0.0;
    for target in targets {
        let s_w = &prototypes[target.positive];
        let a_w = params.semantic_attention_unchecked(s_w);
        let u_w = params.vis_w.matvec(&attend_unchecked(&a_w, feature));
        let pos = dot(s_w, &u_w);
        for &j in &target.negatives {
            let s_j = &prototypes[j];
            let neg = if attend_negatives {
                let a_j = params.semantic_attention_unchecked(s_j);
                dot(s_j, &params.vis_w.matvec(&attend_unchecked(&a_j, feature)))
            } else {
                dot(s_j, &u_w)
            };
            let t = alpha - pos + neg;
            if t > 0.0 {
                loss += t;
            }
        }
    }
    loss
}

/// Multi-label hinge rank loss of one traced input: every positive word is
/// ranked against every negative word, plus `η‖W_v‖²`.
#[allow(clippy::too_many_arguments)]
pub fn hinge_rank_loss(
    params: &ModelParams,
    words: &WordSpace,
    trace: &ForwardTrace,
    positives: &[&str],
    negatives: &[&str],
    alpha: f64,
    eta: f64,
    attend_negatives: bool,
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::invalid("hinge rank loss needs at least one positive word"));
    }
    let pos_set: HashSet<&str> = positives.iter().copied().collect();
    if let Some(w) = negatives.iter().find(|w| pos_set.contains(*w)) {
        return Err(Error::invalid(format!("word '{w}' is both positive and negative")));
    }
    if trace.feature.len() != params.dims.d_feat {
        return Err(Error::shape("trace feature", params.dims.d_feat, trace.feature.len()));
    }
    let mut prototypes = Vec::new();
    for w in positives.iter().chain(negatives) {
        let s = words
            .prototype(w)
            .ok_or_else(|| Error::invalid(format!("word '{w}' has no prototype")))?;
        if s.len() != params.dims.d_sem {
            return Err(Error::shape("prototype", params.dims.d_sem, s.len()));
        }
        prototypes.push(s.to_vec());
    }
    let neg_idx: Vec<usize> = (positives.len()..positives.len() + negatives.len()).collect();
    let targets: Vec<RankTarget> = (0..positives.len())
        .map(|p| RankTarget {
            positive: p,
            negatives: neg_idx.clone(),
        })
        .collect();
    let hinge = sample_hinge(
        params,
        &trace.feature,
        &prototypes,
        &targets,
        alpha,
        attend_negatives,
    );
    Ok(hinge + eta * params.vis_w.frobenius_sq())
}

fn validate_batch(params: &ModelParams, batch: &TrainBatch<'_>, hyper: &Hyper) -> Result<()> {
    if batch.source.is_empty() {
        return Err(Error::invalid("batch has no labeled source example"));
    }
    if hyper.mu > 0.0 && batch.target.is_empty() {
        return Err(Error::invalid("MMD weight is positive but the target batch is empty"));
    }
    let d = params.dims;
    for s in &batch.source {
        if s.feature.len() != d.d_raw {
            return Err(Error::shape("source feature", d.d_raw, s.feature.len()));
        }
        if s.targets.is_empty() {
            return Err(Error::invalid("source example without positive labels"));
        }
        for t in &s.targets {
            for &w in std::iter::once(&t.positive).chain(&t.negatives) {
                match batch.prototypes.get(w) {
                    Some(p) if p.len() == d.d_sem => {}
                    Some(p) => return Err(Error::shape("prototype", d.d_sem, p.len())),
                    None => return Err(Error::invalid(format!("label index {w} out of range"))),
                }
            }
            if t.negatives.contains(&t.positive) {
                return Err(Error::invalid("positive label listed among its negatives"));
            }
        }
    }
    if hyper.mu > 0.0 {
        for t in &batch.target {
            if t.len() != d.d_raw {
                return Err(Error::shape("target feature", d.d_raw, t.len()));
            }
        }
    }
    Ok(())
}

/// Value of the full objective on one batch.
pub fn total_loss(
    params: &ModelParams,
    batch: &TrainBatch<'_>,
    banks: &LayerBanks,
    hyper: &Hyper,
) -> Result<LossBreakdown> {
    validate_batch(params, batch, hyper)?;
    let n = batch.source.len() as f64;
    let mut hinge = 0.0;
    let mut src_hidden = Vec::with_capacity(batch.source.len());
    let mut src_feature = Vec::with_capacity(batch.source.len());
    for s in &batch.source {
        let trace = params.adapt_unchecked(s.feature);
        hinge += sample_hinge(
            params,
            &trace.feature,
            batch.prototypes,
            &s.targets,
            hyper.alpha,
            hyper.attend_negatives,
        );
        src_hidden.push(trace.hidden);
        src_feature.push(trace.feature);
    }
    hinge /= n;
    let mmd = if hyper.mu > 0.0 {
        let traces: Vec<ForwardTrace> = batch.target.iter().map(|x| params.adapt_unchecked(x)).collect();
        let tgt_hidden: Vec<&[f64]> = traces.iter().map(|t| t.hidden.as_slice()).collect();
        let tgt_feature: Vec<&[f64]> = traces.iter().map(|t| t.feature.as_slice()).collect();
        let src_hidden: Vec<&[f64]> = src_hidden.iter().map(Vec::as_slice).collect();
        let src_feature: Vec<&[f64]> = src_feature.iter().map(Vec::as_slice).collect();
        mk_mmd(&src_hidden, &tgt_hidden, &banks.hidden)?
            + mk_mmd(&src_feature, &tgt_feature, &banks.feature)?
    } else {
        0.0
    };
    let reg_v = hyper.eta * params.vis_w.frobenius_sq();
    let reg_a = hyper.gamma * params.attn_w.frobenius_sq();
    Ok(LossBreakdown {
        hinge,
        reg_v,
        reg_a,
        mmd,
        total: hinge + reg_v + reg_a + hyper.mu * mmd,
    })
}

/// Backpropagates the gradient `d_u` of the loss with respect to
/// `u = W_v (a ⊗ v)` where `a = ReLU(W_a s)`, accumulating into `grads`
/// and returning the contribution to `∂/∂v`.
fn backprop_score(
    params: &ModelParams,
    grads: &mut Gradients,
    s: &[f64],
    attention: &[f64],
    feature: &[f64],
    d_u: &[f64],
    d_feature: &mut [f64],
) {
    let attended = attend_unchecked(attention, feature);
    grads.0.vis_w.add_outer(1.0, d_u, &attended);
    let d_attended = params.vis_w.matvec_t(d_u);
    let mut d_pre = vec![0.0; attention.len()];
    for i in 0..attention.len() {
        d_feature[i] += attention[i] * d_attended[i];
        if attention[i] > 0.0 {
            d_pre[i] = feature[i] * d_attended[i];
        }
    }
    grads.0.attn_w.add_outer(1.0, &d_pre, s);
}

/// Backpropagates through the adapter given loss gradients at the hidden
/// activation and output.
fn backprop_adapter(
    params: &ModelParams,
    grads: &mut Gradients,
    x: &[f64],
    trace: &ForwardTrace,
    d_feature: &[f64],
    d_hidden_extra: Option<&[f64]>,
) {
    axpy(1.0, d_feature, &mut grads.0.adapter_b2);
    grads.0.adapter_w2.add_outer(1.0, d_feature, &trace.hidden);
    let mut d_hidden = params.adapter_w2.matvec_t(d_feature);
    if let Some(extra) = d_hidden_extra {
        axpy(1.0, extra, &mut d_hidden);
    }
    for (d, h) in d_hidden.iter_mut().zip(&trace.hidden) {
        if *h <= 0.0 {
            *d = 0.0;
        }
    }
    axpy(1.0, &d_hidden, &mut grads.0.adapter_b1);
    grads.0.adapter_w1.add_outer(1.0, &d_hidden, x);
}

/// Objective value and exact gradient. Hinge kinks take the zero branch and
/// kernel bandwidths are held fixed.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &TrainBatch<'_>,
    banks: &LayerBanks,
    hyper: &Hyper,
) -> Result<(LossBreakdown, Gradients)> {
    validate_batch(params, batch, hyper)?;
    let dims = params.dims;
    let mut grads = Gradients::zeros(dims);
    let n = batch.source.len();
    let scale = 1.0 / n as f64;

    let src_traces: Vec<ForwardTrace> = batch
        .source
        .iter()
        .map(|s| params.adapt_unchecked(s.feature))
        .collect();
    let use_mmd = hyper.mu > 0.0;
    let tgt_traces: Vec<ForwardTrace> = if use_mmd {
        batch.target.iter().map(|x| params.adapt_unchecked(x)).collect()
    } else {
        Vec::new()
    };

    let (mmd, mmd_grads) = if use_mmd {
        let sh: Vec<&[f64]> = src_traces.iter().map(|t| t.hidden.as_slice()).collect();
        let th: Vec<&[f64]> = tgt_traces.iter().map(|t| t.hidden.as_slice()).collect();
        let sf: Vec<&[f64]> = src_traces.iter().map(|t| t.feature.as_slice()).collect();
        let tf: Vec<&[f64]> = tgt_traces.iter().map(|t| t.feature.as_slice()).collect();
        let (mh, gsh, gth) = mk_mmd_with_grad(&sh, &th, &banks.hidden);
        let (mf, gsf, gtf) = mk_mmd_with_grad(&sf, &tf, &banks.feature);
        (mh + mf, Some((gsh, gth, gsf, gtf)))
    } else {
        (0.0, None)
    };

    let mut hinge = 0.0;
    let mut d_u = vec![0.0; dims.d_sem];
    for (i, (sample, trace)) in batch.source.iter().zip(&src_traces).enumerate() {
        let v = &trace.feature;
        let mut d_feature = vec![0.0; dims.d_feat];
        for target in &sample.targets {
            let s_w = &batch.prototypes[target.positive];
            let a_w = params.semantic_attention_unchecked(s_w);
            let u_w = params.vis_w.matvec(&attend_unchecked(&a_w, v));
            let pos = dot(s_w, &u_w);
            d_u.iter_mut().for_each(|x| *x = 0.0);
            let mut any_active = false;
            for &j in &target.negatives {
                let s_j = &batch.prototypes[j];
                if hyper.attend_negatives {
                    let a_j = params.semantic_attention_unchecked(s_j);
                    let neg = dot(s_j, &params.vis_w.matvec(&attend_unchecked(&a_j, v)));
                    let t = hyper.alpha - pos + neg;
                    if t > 0.0 {
                        hinge += t;
                        any_active = true;
                        axpy(-scale, s_w, &mut d_u);
                        let d_uj: Vec<f64> = s_j.iter().map(|x| scale * x).collect();
                        backprop_score(params, &mut grads, s_j, &a_j, v, &d_uj, &mut d_feature);
                    }
                } else {
                    let t = hyper.alpha - pos + dot(s_j, &u_w);
                    if t > 0.0 {
                        hinge += t;
                        any_active = true;
                        for k in 0..dims.d_sem {
                            d_u[k] += scale * (s_j[k] - s_w[k]);
                        }
                    }
                }
            }
            if any_active {
                backprop_score(params, &mut grads, s_w, &a_w, v, &d_u, &mut d_feature);
            }
        }
        let extra_hidden = match &mmd_grads {
            Some((gsh, _, gsf, _)) => {
                axpy(hyper.mu, &gsf[i], &mut d_feature);
                Some(gsh[i].iter().map(|g| hyper.mu * g).collect::<Vec<f64>>())
            }
            None => None,
        };
        backprop_adapter(
            params,
            &mut grads,
            sample.feature,
            trace,
            &d_feature,
            extra_hidden.as_deref(),
        );
    }
    if let Some((_, gth, _, gtf)) = &mmd_grads {
        for (j, (x, trace)) in batch.target.iter().zip(&tgt_traces).enumerate() {
            let d_feature: Vec<f64> = gtf[j].iter().map(|g| hyper.mu * g).collect();
            let d_hidden: Vec<f64> = gth[j].iter().map(|g| hyper.mu * g).collect();
            backprop_adapter(params, &mut grads, x, trace, &d_feature, Some(&d_hidden));
        }
    }
    hinge *= scale;

    add_scaled(&mut grads.0.vis_w, 2.0 * hyper.eta, &params.vis_w);
    add_scaled(&mut grads.0.attn_w, 2.0 * hyper.gamma, &params.attn_w);
    let reg_v = hyper.eta * params.vis_w.frobenius_sq();
    let reg_a = hyper.gamma * params.attn_w.frobenius_sq();
    let loss = LossBreakdown {
        hinge,
        reg_v,
        reg_a,
        mmd,
        total: hinge + reg_v + reg_a + hyper.mu * mmd,
    };
    Ok((loss, grads))
}

fn add_scaled(dst: &mut Matrix, scale: f64, src: &Matrix) {
    if scale != 0.0 {
        axpy(scale, src.as_slice(), dst.as_mut_slice());
    }
}

/// Exact gradient of [`total_loss`] with respect to every parameter tensor.
pub fn gradients(
    params: &ModelParams,
    batch: &TrainBatch<'_>,
    banks: &LayerBanks,
    hyper: &Hyper,
) -> Result<Gradients> {
    loss_and_gradients(params, batch, banks, hyper).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn kernel_examples() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(gaussian_kernel(&x, &x, 0.7).unwrap(), 1.0);
        let k = gaussian_kernel(&[0.0, 0.0], &[3.0, 4.0], 5.0).unwrap();
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k - 0.60653).abs() < 1e-5);
        assert!(gaussian_kernel(&x, &x, 0.0).is_err());
        assert!(gaussian_kernel(&x, &x, -1.0).is_err());
    }

    #[test]
    fn kernel_symmetry_exact() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..100 {
            let a: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let s = rng.uniform(0.1, 3.0);
            assert_eq!(
                gaussian_kernel(&a, &b, s).unwrap().to_bits(),
                gaussian_kernel(&b, &a, s).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn bank_validation() {
        assert!(KernelBank::new(vec![1.0, 2.0], vec![0.5, 0.5]).is_ok());
        assert!(KernelBank::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(KernelBank::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(KernelBank::new(vec![1.0, 2.0], vec![0.6, 0.5]).is_err());
        assert!(KernelBank::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(KernelBank::new(vec![0.0], vec![1.0]).is_err());
        assert!(KernelBank::new(vec![], vec![]).is_err());
        let ladder = KernelBank::ladder(2.0).unwrap();
        assert_eq!(ladder.sigmas(), &[0.5, 1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn median_heuristic_uses_median_distance() {
        // Pairwise distances 1, 2, 3 → median 2.
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let bank = KernelBank::median_heuristic(&pts).unwrap();
        assert_eq!(bank.sigmas()[2], 2.0);
        let same = vec![vec![1.0], vec![1.0]];
        assert_eq!(KernelBank::median_heuristic(&same).unwrap().sigmas()[2], 1.0);
    }

    #[test]
    fn mmd_single_pair_closed_form() {
        let bank = KernelBank::single(1.3).unwrap();
        let x = vec![vec![0.2, 0.9]];
        let y = vec![vec![-1.0, 0.4]];
        let k = gaussian_kernel(&x[0], &y[0], 1.3).unwrap();
        let m = mk_mmd(&x, &y, &bank).unwrap();
        assert!((m - (2.0 - 2.0 * k)).abs() < 1e-15);
    }

    #[test]
    fn mmd_identical_sets_vanish_and_errors() {
        let mut rng = SplitMix64::new(8);
        let a: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let bank = KernelBank::ladder(1.0).unwrap();
        assert!(mk_mmd(&a, &a, &bank).unwrap().abs() < 1e-12);
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(mk_mmd(&a, &empty, &bank).is_err());
        let short = vec![vec![1.0]];
        assert!(mk_mmd(&a, &short, &bank).is_err());
    }

    #[test]
    fn hinge_with_no_negatives_is_regularizer_only() {
        let dims = ModelDims {
            d_raw: 3,
            d_hidden: 4,
            d_feat: 3,
            d_sem: 2,
        };
        let params = ModelParams::init(dims, 1).unwrap();
        let ws = WordSpace::from_entries(2, [("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap();
        let trace = params.adapt(&[0.1, 0.2, 0.3]).unwrap();
        let l = hinge_rank_loss(&params, &ws, &trace, &["a"], &[], 0.5, 0.01, false).unwrap();
        assert!((l - 0.01 * params.vis_w.frobenius_sq()).abs() < 1e-15);
        assert!(hinge_rank_loss(&params, &ws, &trace, &[], &["a"], 0.5, 0.0, false).is_err());
        assert!(hinge_rank_loss(&params, &ws, &trace, &["a"], &["a"], 0.5, 0.0, false).is_err());
        assert!(hinge_rank_loss(&params, &ws, &trace, &["a"], &["zz"], 0.5, 0.0, false).is_err());
    }
}
