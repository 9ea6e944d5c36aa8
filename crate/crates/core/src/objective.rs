//! Clipped surrogate objectives at token (GRPO), response (GSPO) and
//! sub-sentence segment (SSPO) granularity.
//!
//! Ratios are carried as log-ratios until the final `exp`. Clip bounds are
//! absolute ratio bounds: a term is `min(s * A, clamp(s, low, high) * A)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::advantage::AdvantageVector;
use crate::entropy::{segment_bounds, EntropyConfig};
use crate::error::{Error, Result};
use crate::math::{exp, mean, Accumulator};
use crate::rollout::RolloutGroup;
use crate::segment::Segmentation;

/// Absolute lower/upper bounds on an importance ratio, `0 < low < high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBounds {
    low: f64,
    high: f64,
}

impl ClipBounds {
    /// Bounds that never bind on a positive ratio.
    pub const UNBOUNDED: Self = Self {
        low: f64::MIN_POSITIVE,
        high: f64::INFINITY,
    };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        // NaN fails every comparison and lands in the error branch
        if low > 0.0 && low < high && !high.is_nan() {
            Ok(Self { low, high })
        } else {
            Err(Error::InvalidBounds { low, high })
        }
    }

    /// `(1 - eps, 1 + eps)`.
    pub fn symmetric(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidBounds {
                low: 1.0 - eps,
                high: 1.0 + eps,
            });
        }
        Self::new(1.0 - eps, 1.0 + eps)
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn clamp(&self, ratio: f64) -> f64 {
        ratio.clamp(self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedTerm {
    pub value: f64,
    /// The clamped branch was strictly smaller and therefore selected.
    pub clipped: bool,
}

/// `min(ratio * adv, clamp(ratio) * adv)`. Ties resolve to the unclipped branch.
pub fn clipped_term(ratio: f64, advantage: f64, bounds: ClipBounds) -> ClippedTerm {
    let unclipped = ratio * advantage;
    let clamped = bounds.clamp(ratio) * advantage;
    if clamped < unclipped {
        ClippedTerm {
            value: clamped,
            clipped: true,
        }
    } else {
        ClippedTerm {
            value: unclipped,
            clipped: false,
        }
    }
}

/// Geometric mean of token ratios over a segment: `exp(mean(log_ratios))`.
pub fn segment_ratio(log_ratios: &[f64]) -> Result<f64> {
    if log_ratios.is_empty() {
        return Err(Error::Empty("segment"));
    }
    if log_ratios.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log-ratio"));
    }
    Ok(exp(mean(log_ratios)))
}

/// Length-normalized sequence ratio over the whole response.
pub fn response_ratio(log_ratios: &[f64]) -> Result<f64> {
    segment_ratio(log_ratios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub value: f64,
    /// `[response][token]`: clipping changed this token's contribution.
    pub per_token_clipped: Vec<Vec<bool>>,
    pub clipped_tokens: usize,
    pub total_tokens: usize,
    pub clip_fraction: f64,
    /// `[response][unit]`: one ratio per clipping unit (token, response or segment).
    pub per_segment_ratios: Vec<Vec<f64>>,
}

impl ObjectiveReport {
    fn new(
        value: f64,
        per_token_clipped: Vec<Vec<bool>>,
        per_segment_ratios: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("objective value"));
        }
        let total_tokens = per_token_clipped.iter().map(Vec::len).sum();
        let clipped_tokens = per_token_clipped
            .iter()
            .flatten()
            .filter(|&&c| c)
            .count();
        let clip_fraction = if total_tokens == 0 {
            0.0
        } else {
            clipped_tokens as f64 / total_tokens as f64
        };
        Ok(Self {
            value,
            per_token_clipped,
            clipped_tokens,
            total_tokens,
            clip_fraction,
            per_segment_ratios,
        })
    }
}

pub(crate) fn check_inputs(group: &RolloutGroup, adv: &AdvantageVector) -> Result<()> {
    group.validate()?;
    if adv.len() != group.size() {
        return Err(Error::LengthMismatch {
            what: "advantages",
            expected: group.size(),
            actual: adv.len(),
        });
    }
    Ok(())
}

pub(crate) fn segmentation_of(group: &RolloutGroup, i: usize) -> Result<&Segmentation> {
    group.responses[i]
        .segmentation
        .as_ref()
        .ok_or(Error::MissingSegmentation { response: i })
}

/// Token-level ratios: `(1/G) sum_i (1/|y_i|) sum_t term(w_it, A_i)`.
pub fn grpo_objective(
    group: &RolloutGroup,
    adv: &AdvantageVector,
    bounds: ClipBounds,
) -> Result<ObjectiveReport> {
    check_inputs(group, adv)?;
    let g = group.size() as f64;
    let mut total = Accumulator::for_len(0);
    let mut clipped = Vec::with_capacity(group.size());
    let mut ratios = Vec::with_capacity(group.size());
    for (i, response) in group.responses.iter().enumerate() {
        let log_ratios = response.log_ratios()?;
        let mut inner = Accumulator::for_len(log_ratios.len());
        let mut flags = Vec::with_capacity(log_ratios.len());
        let mut unit_ratios = Vec::with_capacity(log_ratios.len());
        for &lr in &log_ratios {
            let w = exp(lr);
            let term = clipped_term(w, adv.values[i], bounds);
            inner.add(term.value);
            flags.push(term.clipped);
            unit_ratios.push(w);
        }
        total.add(inner.total() / response.len() as f64);
        clipped.push(flags);
        ratios.push(unit_ratios);
    }
    ObjectiveReport::new(total.total() / g, clipped, ratios)
}

/// One length-normalized ratio per response: `(1/G) sum_i term(s_i, A_i)`.
///
/// A clipped response marks every one of its tokens as clipped.
pub fn gspo_objective(
    group: &RolloutGroup,
    adv: &AdvantageVector,
    bounds: ClipBounds,
) -> Result<ObjectiveReport> {
    check_inputs(group, adv)?;
    let g = group.size() as f64;
    let mut total = Accumulator::for_len(0);
    let mut clipped = Vec::with_capacity(group.size());
    let mut ratios = Vec::with_capacity(group.size());
    for (i, response) in group.responses.iter().enumerate() {
        let s = response_ratio(&response.log_ratios()?)?;
        let term = clipped_term(s, adv.values[i], bounds);
        total.add(term.value);
        clipped.push(vec![term.clipped; response.len()]);
        ratios.push(vec![s]);
    }
    ObjectiveReport::new(total.total() / g, clipped, ratios)
}

/// Segment-level ratios:
/// `(1/G) sum_i (1/|y_i|) sum_j |y_ij| term(s_ij, A_i; bounds_ij)`.
///
/// `bounds[i][j]` is the clip interval for segment `j` of response `i`.
pub fn sspo_objective(
    group: &RolloutGroup,
    adv: &AdvantageVector,
    bounds: &[Vec<ClipBounds>],
) -> Result<ObjectiveReport> {
    check_inputs(group, adv)?;
    check_bounds_shape(group, bounds)?;
    let g = group.size() as f64;
    let mut total = Accumulator::for_len(0);
    let mut clipped = Vec::with_capacity(group.size());
    let mut ratios = Vec::with_capacity(group.size());
    for (i, response) in group.responses.iter().enumerate() {
        let seg = segmentation_of(group, i)?;
        let log_ratios = response.log_ratios()?;
        let mut inner = Accumulator::for_len(response.len());
        let mut flags = vec![false; response.len()];
        let mut unit_ratios = Vec::with_capacity(seg.num_segments());
        for (j, span) in seg.spans().iter().enumerate() {
            let s = segment_ratio(&log_ratios[span.range()])?;
            let term = clipped_term(s, adv.values[i], bounds[i][j]);
            inner.add(span.len() as f64 * term.value);
            flags[span.range()].fill(term.clipped);
            unit_ratios.push(s);
        }
        total.add(inner.total() / response.len() as f64);
        clipped.push(flags);
        ratios.push(unit_ratios);
    }
    ObjectiveReport::new(total.total() / g, clipped, ratios)
}

pub(crate) fn check_bounds_shape(group: &RolloutGroup, bounds: &[Vec<ClipBounds>]) -> Result<()> {
    if bounds.len() != group.size() {
        return Err(Error::LengthMismatch {
            what: "per-response bound lists",
            expected: group.size(),
            actual: bounds.len(),
        });
    }
    for (i, b) in bounds.iter().enumerate() {
        let expected = segmentation_of(group, i)?.num_segments();
        if b.len() != expected {
            return Err(Error::LengthMismatch {
                what: "segment bounds",
                expected,
                actual: b.len(),
            });
        }
    }
    Ok(())
}

/// A surrogate objective together with its clipping rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Grpo { bounds: ClipBounds },
    Gspo { bounds: ClipBounds },
    /// Bounds per segment come from `clip`: adaptive (entropy) or fixed.
    Sspo { clip: EntropyConfig },
}

impl Surrogate {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Grpo { .. } => "grpo",
            Self::Gspo { .. } => "gspo",
            Self::Sspo { .. } => "sspo",
        }
    }

    pub fn evaluate(&self, group: &RolloutGroup, adv: &AdvantageVector) -> Result<ObjectiveReport> {
        match self {
            Self::Grpo { bounds } => grpo_objective(group, adv, *bounds),
            Self::Gspo { bounds } => gspo_objective(group, adv, *bounds),
            Self::Sspo { clip } => {
                let bounds = segment_bounds(group, clip)?;
                sspo_objective(group, adv, &bounds)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFractionRow {
    pub label: String,
    pub clipped_tokens: usize,
    pub total_tokens: usize,
    pub clip_fraction: f64,
}

/// Tabulates the clip fraction of several reports computed on the same data.
pub fn clip_fraction_report<'a, I, S>(reports: I) -> Vec<ClipFractionRow>
where
    I: IntoIterator<Item = (S, &'a ObjectiveReport)>,
    S: Into<String>,
{
    reports
        .into_iter()
        .map(|(label, r)| ClipFractionRow {
            label: label.into(),
            clipped_tokens: r.clipped_tokens,
            total_tokens: r.total_tokens,
            clip_fraction: r.clip_fraction,
        })
        .collect()
}
