//! Closed-form gradients of the clipped surrogates with respect to the toy
//! policy's logit table, plus a central-difference oracle.
//!
//! Every surrogate's gradient is `sum_tokens c_t * grad log pi(token)`. The
//! per-token coefficients `c_t` are computed here; a clipped unit contributes
//! zero because the clamped branch does not depend on the parameters. At a
//! tie the unclipped branch is taken.
//!
//! Only `new_logp` depends on the parameters. Old log-probabilities and the
//! entropy-derived bounds are constants.

use alloc::vec;
use alloc::vec::Vec;

use crate::advantage::{group_advantages, AdvantageVector};
use crate::entropy::segment_bounds;
use crate::error::{Error, Result};
use crate::math::exp;
use crate::objective::{
    check_bounds_shape, check_inputs, clipped_term, response_ratio, segment_ratio,
    segmentation_of, ObjectiveReport, Surrogate,
};
use crate::rollout::RolloutGroup;
use crate::toy::{score_group, PolicyParams, QueryGroup};

/// `[response][token]` coefficient multiplying `grad log pi` of that token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenWeights {
    pub coefficients: Vec<Vec<f64>>,
}

pub fn token_weights(
    group: &RolloutGroup,
    adv: &AdvantageVector,
    surrogate: &Surrogate,
) -> Result<TokenWeights> {
    check_inputs(group, adv)?;
    let g = group.size() as f64;
    let mut coefficients = Vec::with_capacity(group.size());
    match surrogate {
        Surrogate::Grpo { bounds } => {
            for (i, response) in group.responses.iter().enumerate() {
                let a = adv.values[i];
                let scale = 1.0 / (g * response.len() as f64);
                let row = response
                    .log_ratios()?
                    .into_iter()
                    .map(|lr| {
                        let w = exp(lr);
                        if clipped_term(w, a, *bounds).clipped {
                            0.0
                        } else {
                            scale * w * a
                        }
                    })
                    .collect();
                coefficients.push(row);
            }
        }
        Surrogate::Gspo { bounds } => {
            for (i, response) in group.responses.iter().enumerate() {
                let a = adv.values[i];
                let s = response_ratio(&response.log_ratios()?)?;
                let c = if clipped_term(s, a, *bounds).clipped {
                    0.0
                } else {
                    s * a / (g * response.len() as f64)
                };
                coefficients.push(vec![c; response.len()]);
            }
        }
        Surrogate::Sspo { clip } => {
            let bounds = segment_bounds(group, clip)?;
            check_bounds_shape(group, &bounds)?;
            for (i, response) in group.responses.iter().enumerate() {
                let a = adv.values[i];
                let seg = segmentation_of(group, i)?;
                let log_ratios = response.log_ratios()?;
                // segment weight |y_ij| and the 1/|y_ij| of the mean log-ratio cancel
                let scale = 1.0 / (g * response.len() as f64);
                let mut row = vec![0.0; response.len()];
                for (j, span) in seg.spans().iter().enumerate() {
                    let s = segment_ratio(&log_ratios[span.range()])?;
                    if !clipped_term(s, a, bounds[i][j]).clipped {
                        row[span.range()].fill(scale * s * a);
                    }
                }
                coefficients.push(row);
            }
        }
    }
    Ok(TokenWeights { coefficients })
}

/// Batch objective: the mean of per-group objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub value: f64,
    pub clipped_tokens: usize,
    pub total_tokens: usize,
    pub clip_fraction: f64,
    pub groups: Vec<ObjectiveReport>,
}

impl BatchReport {
    pub fn from_groups(groups: Vec<ObjectiveReport>) -> Self {
        let n = groups.len().max(1) as f64;
        let value = groups.iter().map(|r| r.value).sum::<f64>() / n;
        let clipped_tokens = groups.iter().map(|r| r.clipped_tokens).sum();
        let total_tokens: usize = groups.iter().map(|r| r.total_tokens).sum();
        let clip_fraction = if total_tokens == 0 {
            0.0
        } else {
            clipped_tokens as f64 / total_tokens as f64
        };
        Self {
            value,
            clipped_tokens,
            total_tokens,
            clip_fraction,
            groups,
        }
    }
}

/// Objective, optional gradient, and the batch rescored under the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    pub report: BatchReport,
    pub gradient: Option<Vec<f64>>,
    pub scored: Vec<QueryGroup>,
    pub advantages: Vec<AdvantageVector>,
}

/// Rescores `batch` under `policy` and evaluates `surrogate` on it.
pub fn evaluate_batch(
    policy: &PolicyParams,
    batch: &[QueryGroup],
    surrogate: &Surrogate,
    with_gradient: bool,
) -> Result<BatchEvaluation> {
    let n_groups = batch.len().max(1) as f64;
    let vocab = policy.vocab_size();
    let mut gradient = with_gradient.then(|| vec![0.0; policy.logits().len()]);
    let mut reports = Vec::with_capacity(batch.len());
    let mut scored = Vec::with_capacity(batch.len());
    let mut advantages = Vec::with_capacity(batch.len());
    for qg in batch {
        let mut qg = qg.clone();
        score_group(policy, &mut qg);
        let adv = group_advantages(&qg.group.rewards())?;
        reports.push(surrogate.evaluate(&qg.group, &adv)?);
        if let Some(grad) = gradient.as_mut() {
            let weights = token_weights(&qg.group, &adv, surrogate)?;
            for (i, response) in qg.group.responses.iter().enumerate() {
                let ids = response.token_ids();
                for (t, &c) in weights.coefficients[i].iter().enumerate() {
                    if !c.is_finite() {
                        return Err(Error::NonFiniteAt {
                            what: "gradient coefficient",
                            query: qg.query,
                            response: i,
                            token: t,
                        });
                    }
                    if c == 0.0 {
                        continue;
                    }
                    let state = policy.state_index(qg.query, &ids[..t]);
                    let dist = policy.next_token_distribution(state);
                    let row = &mut grad[state * vocab..(state + 1) * vocab];
                    let c = c / n_groups;
                    for (v, p) in dist.probs.iter().enumerate() {
                        let indicator = if v == ids[t] as usize { 1.0 } else { 0.0 };
                        row[v] += c * (indicator - p);
                    }
                }
            }
        }
        advantages.push(adv);
        scored.push(qg);
    }
    Ok(BatchEvaluation {
        report: BatchReport::from_groups(reports),
        gradient,
        scored,
        advantages,
    })
}

pub fn batch_objective(
    policy: &PolicyParams,
    batch: &[QueryGroup],
    surrogate: &Surrogate,
) -> Result<BatchReport> {
    Ok(evaluate_batch(policy, batch, surrogate, false)?.report)
}

/// Exact gradient of the batch objective at `policy`, clip branches held fixed.
pub fn objective_gradient(
    policy: &PolicyParams,
    batch: &[QueryGroup],
    surrogate: &Surrogate,
) -> Result<Vec<f64>> {
    Ok(evaluate_batch(policy, batch, surrogate, true)?
        .gradient
        .unwrap_or_default())
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let plus = f(&x);
        x[i] = point[i] - step;
        let minus = f(&x);
        x[i] = point[i];
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    /// `None` where a clip-branch change within `±step` was detected.
    pub gradient: Vec<Option<f64>>,
    /// Parameters excluded because of a branch tie.
    pub ties: Vec<usize>,
}

fn clip_pattern(report: &BatchReport) -> Vec<&Vec<Vec<bool>>> {
    report.groups.iter().map(|r| &r.per_token_clipped).collect()
}

/// Central-difference gradient of the batch objective over every logit.
///
/// A parameter whose `±step` perturbation changes any clip decision sits on
/// a branch boundary; it is reported in `ties` and left out.
pub fn finite_difference_gradient(
    policy: &PolicyParams,
    batch: &[QueryGroup],
    surrogate: &Surrogate,
    step: f64,
) -> Result<FiniteDifference> {
    if !(step > 0.0) {
        return Err(Error::Config(alloc::format!("step must be positive (got {step})")));
    }
    let center = batch_objective(policy, batch, surrogate)?;
    let base = clip_pattern(&center);
    let mut probe = policy.clone();
    let mut gradient = Vec::with_capacity(policy.logits().len());
    let mut ties = Vec::new();
    for k in 0..policy.logits().len() {
        let x = policy.logits()[k];
        probe.logits_mut()[k] = x + step;
        let plus = batch_objective(&probe, batch, surrogate)?;
        probe.logits_mut()[k] = x - step;
        let minus = batch_objective(&probe, batch, surrogate)?;
        probe.logits_mut()[k] = x;
        if clip_pattern(&plus) != base || clip_pattern(&minus) != base {
            ties.push(k);
            gradient.push(None);
        } else {
            gradient.push(Some((plus.value - minus.value) / (2.0 * step)));
        }
    }
    Ok(FiniteDifference { gradient, ties })
}

/// Denominator floor for [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}
