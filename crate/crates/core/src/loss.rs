//! The statistical loss L = L0 + lambda * L_div and its per-sample
//! gradients.
//!
//! L0 is the mean over classes of the unbiased covariance trace; L_div sums
//! (delta - T^2) over ordered class pairs, pushing class distributions
//! apart. Gradients come in two modes:
//!
//! * `Paper` — the published closed-form expressions, transcribed as
//!   printed. The L0 form carries a 1/n_k factor and the diversity form an
//!   (n_k-1)/n_k factor; both are approximations of the true gradient of
//!   the forward pass (see `gradcheck`).
//! * `Exact` — the analytic L0 gradient (1/(n_k-1) factor) plus central
//!   finite differences of the diversity forward pass, which match the true
//!   gradient of the implemented loss by construction.

use std::collections::BTreeMap;

use crate::class_stats::{self, BatchStats, ClassBatch};
use crate::error::{Error, Result};
use crate::linalg;

/// Gradient formulas to use for backpropagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Paper,
    Exact,
}

/// Weights and switches of the statistical loss.
#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Diversity weight lambda.
    pub lambda: f64,
    /// Separation margin delta replacing the T^2 quantile.
    pub delta: f64,
    /// Ridge added to pooled scatter matrices. `None` selects the
    /// scale-aware default 1e-3 * trace / p (floor 1e-8) per pair.
    pub ridge_eps: Option<f64>,
    pub grad_mode: GradMode,
    /// Clamp each pair's (delta - T^2) term at zero.
    pub hinge: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            delta: 10.0,
            ridge_eps: None,
            grad_mode: GradMode::Paper,
            hinge: false,
        }
    }
}

/// Per-sample gradients shaped like the batch list: `grads[b][i]` is
/// dL/dz for sample `i` of batch `b`.
pub type SampleGrads = Vec<Vec<Vec<f64>>>;

/// Forward values and per-sample gradients for one batch.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub l0: f64,
    pub l_div: f64,
    pub total: f64,
    /// T^2 per ordered class pair (k, t), keyed by class id.
    pub pair_t2: BTreeMap<(usize, usize), f64>,
    pub grads: SampleGrads,
    /// Fewer than two eligible classes: the diversity term is zero.
    pub single_class: bool,
}

/// Diversity term value plus its per-pair T^2 map.
#[derive(Debug, Clone)]
pub struct DivTerms {
    pub value: f64,
    pub pair_t2: BTreeMap<(usize, usize), f64>,
    pub single_class: bool,
}

fn check_counts(stats: &[BatchStats]) -> Result<()> {
    for st in stats {
        if st.count < 2 {
            return Err(Error::DegenerateClass {
                class_id: st.class_id,
                count: st.count,
            });
        }
    }
    Ok(())
}

/// L0: mean over classes of trace(S_k) / (n_k - 1). Nonnegative; zero only
/// when every sample sits at its class mean.
pub fn loss_l0(stats: &[BatchStats]) -> Result<f64> {
    class_stats::pooled_trace_estimate(stats)
}

/// L_div: sum over ordered pairs k != t of (delta - T^2(k, t)), each term
/// clamped at zero when `hinge` is set. With a single class the sum is
/// empty; the report flags it instead of failing.
pub fn loss_ldiv(stats: &[BatchStats], cfg: &LossConfig) -> Result<DivTerms> {
    check_counts(stats)?;
    let mut pair_t2 = BTreeMap::new();
    if stats.len() < 2 {
        return Ok(DivTerms {
            value: 0.0,
            pair_t2,
            single_class: true,
        });
    }
    let mut value = 0.0;
    for i in 0..stats.len() {
        for j in (i + 1)..stats.len() {
            let pooled = stats[i].scatter.add(&stats[j].scatter)?;
            let eps = cfg
                .ridge_eps
                .unwrap_or_else(|| class_stats::scaled_ridge_eps(&pooled));
            let t2 = class_stats::hotelling_t2(&stats[i], &stats[j], eps)?;
            pair_t2.insert((stats[i].class_id, stats[j].class_id), t2);
            pair_t2.insert((stats[j].class_id, stats[i].class_id), t2);
            let mut term = cfg.delta - t2;
            if cfg.hinge && term < 0.0 {
                term = 0.0;
            }
            // both ordered pairs contribute the same term
            value += 2.0 * term;
        }
    }
    Ok(DivTerms {
        value,
        pair_t2,
        single_class: false,
    })
}

/// Published L0 gradient: (2/Lambda) * (1/n_k) * (z_i - mean_k).
pub fn grad_l0_paper(batches: &[ClassBatch], stats: &[BatchStats]) -> Result<SampleGrads> {
    l0_grads(batches, stats, |n| n)
}

/// Analytic L0 gradient of the forward pass:
/// (2/Lambda) * (1/(n_k - 1)) * (z_i - mean_k).
pub fn grad_l0_exact(batches: &[ClassBatch], stats: &[BatchStats]) -> Result<SampleGrads> {
    l0_grads(batches, stats, |n| n - 1.0)
}

fn l0_grads(
    batches: &[ClassBatch],
    stats: &[BatchStats],
    denom: impl Fn(f64) -> f64,
) -> Result<SampleGrads> {
    check_counts(stats)?;
    if batches.len() != stats.len() {
        return Err(Error::LengthMismatch {
            left: batches.len(),
            right: stats.len(),
        });
    }
    let num_classes = stats.len() as f64;
    let mut grads = zero_grads(batches);
    for (b, (batch, st)) in batches.iter().zip(stats).enumerate() {
        let factor = 2.0 / (num_classes * denom(st.count as f64));
        for (i, z) in batch.features.iter().enumerate() {
            for (d, g) in grads[b][i].iter_mut().enumerate() {
                *g = factor * (z[d] - st.mean[d]);
            }
        }
    }
    Ok(grads)
}

/// Published diversity gradient, transcribed term by term. For each
/// ordered pair (k, t) every sample z_i of class k accumulates, with
/// c = (n_k + n_t - 2) / (1/n_k + 1/n_t), A = S_k + S_t + eps I and
/// w = A^-1 (mean_k - mean_t):
///
///   c * [ -(2/n_k) w
///         + ((n_k-1)/n_k) (gamma^T A^-1 z_i) w
///         + ((n_k-1)/n_k) (z_i^T A^-1 gamma) w ]
///
/// Pairs whose hinged term is inactive contribute nothing.
pub fn grad_ldiv_paper(
    batches: &[ClassBatch],
    stats: &[BatchStats],
    cfg: &LossConfig,
) -> Result<SampleGrads> {
    check_counts(stats)?;
    if batches.len() != stats.len() {
        return Err(Error::LengthMismatch {
            left: batches.len(),
            right: stats.len(),
        });
    }
    let mut grads = zero_grads(batches);
    for i in 0..stats.len() {
        for j in 0..stats.len() {
            if i == j {
                continue;
            }
            let (k, t) = (&stats[i], &stats[j]);
            let pooled = k.scatter.add(&t.scatter)?;
            let eps = cfg
                .ridge_eps
                .unwrap_or_else(|| class_stats::scaled_ridge_eps(&pooled));
            let inv = linalg::ridge_inverse(&pooled, eps)?;
            let gamma = linalg::sub(&k.mean, &t.mean);
            let w = inv.mul_vec(&gamma)?;
            let n_k = k.count as f64;
            let n_t = t.count as f64;
            let c = (n_k + n_t - 2.0) / (1.0 / n_k + 1.0 / n_t);
            if cfg.hinge {
                let t2 = c * linalg::dot(&gamma, &w);
                if cfg.delta - t2 <= 0.0 {
                    continue;
                }
            }
            let shrink = (n_k - 1.0) / n_k;
            for (s, z) in batches[i].features.iter().enumerate() {
                // A^-1 is symmetric, so both bracketed scalars equal w . z
                let wz = linalg::dot(&w, z);
                let coeff = c * (-2.0 / n_k + shrink * wz + shrink * wz);
                linalg::axpy(&mut grads[i][s], coeff, &w);
            }
        }
    }
    Ok(grads)
}

/// Exact diversity gradient: central finite differences of the L_div
/// forward pass, step 1e-5 * max(1, |coordinate|).
pub fn grad_ldiv_exact(batches: &[ClassBatch], cfg: &LossConfig) -> Result<SampleGrads> {
    finite_difference_grads(batches, |b| {
        let stats = all_stats(b)?;
        Ok(loss_ldiv(&stats, cfg)?.value)
    })
}

/// Forward values without gradients.
#[derive(Debug, Clone)]
pub struct LossValues {
    pub l0: f64,
    pub l_div: f64,
    pub total: f64,
    pub pair_t2: BTreeMap<(usize, usize), f64>,
    pub single_class: bool,
}

/// Forward pass only. Classes with fewer than two samples are excluded
/// from every statistic and loss term.
pub fn loss_values(batches: &[ClassBatch], cfg: &LossConfig) -> Result<LossValues> {
    let eligible = eligible_indices(batches)?;
    let used: Vec<ClassBatch> = eligible.iter().map(|&b| batches[b].clone()).collect();
    let stats = all_stats(&used)?;
    let l0 = loss_l0(&stats)?;
    let div = loss_ldiv(&stats, cfg)?;
    Ok(LossValues {
        l0,
        l_div: div.value,
        total: l0 + cfg.lambda * div.value,
        pair_t2: div.pair_t2,
        single_class: div.single_class,
    })
}

fn eligible_indices(batches: &[ClassBatch]) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..batches.len())
        .filter(|&b| batches[b].count() >= 2)
        .collect();
    if eligible.is_empty() {
        return Err(Error::DegenerateBatch {
            reason: "no class with at least two samples".to_string(),
        });
    }
    Ok(eligible)
}

/// Full forward pass plus per-sample gradients in the configured mode.
///
/// Classes with fewer than two samples are excluded from every statistic
/// and loss term; their samples receive zero gradients. Lambda = 0 skips
/// the diversity gradients entirely.
pub fn loss_total(batches: &[ClassBatch], cfg: &LossConfig) -> Result<LossReport> {
    let eligible = eligible_indices(batches)?;
    let used: Vec<ClassBatch> = eligible.iter().map(|&b| batches[b].clone()).collect();
    let stats = all_stats(&used)?;

    let l0 = loss_l0(&stats)?;
    let div = loss_ldiv(&stats, cfg)?;
    let total = l0 + cfg.lambda * div.value;

    let l0_grads = match cfg.grad_mode {
        GradMode::Paper => grad_l0_paper(&used, &stats)?,
        GradMode::Exact => grad_l0_exact(&used, &stats)?,
    };
    let div_grads = if cfg.lambda == 0.0 || div.single_class {
        None
    } else {
        Some(match cfg.grad_mode {
            GradMode::Paper => grad_ldiv_paper(&used, &stats, cfg)?,
            GradMode::Exact => grad_ldiv_exact(&used, cfg)?,
        })
    };

    let mut grads = zero_grads(batches);
    for (slot, &b) in eligible.iter().enumerate() {
        for i in 0..batches[b].count() {
            grads[b][i].copy_from_slice(&l0_grads[slot][i]);
            if let Some(dg) = &div_grads {
                linalg::axpy(&mut grads[b][i], cfg.lambda, &dg[slot][i]);
            }
        }
    }

    Ok(LossReport {
        l0,
        l_div: div.value,
        total,
        pair_t2: div.pair_t2,
        grads,
        single_class: div.single_class,
    })
}

/// Central finite differences of an arbitrary batch functional. Used for
/// the exact-mode diversity gradient and by `gradcheck`.
pub fn finite_difference_grads(
    batches: &[ClassBatch],
    mut f: impl FnMut(&[ClassBatch]) -> Result<f64>,
) -> Result<SampleGrads> {
    let mut work = batches.to_vec();
    let mut grads = zero_grads(batches);
    for b in 0..work.len() {
        for i in 0..work[b].features.len() {
            for d in 0..work[b].features[i].len() {
                let orig = work[b].features[i][d];
                let h = 1e-5 * orig.abs().max(1.0);
                work[b].features[i][d] = orig + h;
                let plus = f(&work)?;
                work[b].features[i][d] = orig - h;
                let minus = f(&work)?;
                work[b].features[i][d] = orig;
                grads[b][i][d] = (plus - minus) / (2.0 * h);
            }
        }
    }
    Ok(grads)
}

/// Statistics for every batch, in batch order.
pub fn all_stats(batches: &[ClassBatch]) -> Result<Vec<BatchStats>> {
    batches.iter().map(BatchStats::from_batch).collect()
}

fn zero_grads(batches: &[ClassBatch]) -> SampleGrads {
    batches
        .iter()
        .map(|b| vec![vec![0.0; b.dim()]; b.count()])
        .collect()
}
