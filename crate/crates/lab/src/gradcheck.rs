//! Analytic-vs-numeric gradient checks on random small instances.
//!
//! Each instance draws a tabular policy (vocab 3..=8, context order 0..=2),
//! samples up to 4 responses of up to 8 tokens per query from it, assigns
//! random rewards, then perturbs the logits so ratios move away from 1.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sspo_core::{
    finite_difference_gradient, objective_gradient, relative_error, sample_group, segment,
    ClipBounds, EntropyConfig, PolicyParams, QueryGroup, SegmentMode, SeparatorSpec, Surrogate,
    TaskSpec,
};

use crate::error::Result;

pub const MAX_VOCAB: usize = 8;
pub const MAX_RESPONSES: usize = 4;
pub const MAX_TOKENS: usize = 8;
pub const DEFAULT_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;

/// A policy and a batch sampled from an earlier version of it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub policy: PolicyParams,
    pub batch: Vec<QueryGroup>,
}

impl Instance {
    pub fn random(seed: u64, perturbation: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = rng.random_range(3..=MAX_VOCAB);
        let order = rng.random_range(0..=2);
        let queries = rng.random_range(1..=2);
        let g = rng.random_range(2..=MAX_RESPONSES);
        let task = TaskSpec {
            num_queries: queries,
            target_len: 1,
            vocab_size: vocab,
            max_len: rng.random_range(1..=MAX_TOKENS),
            ..TaskSpec::default()
        };
        let old = PolicyParams::random(queries, vocab, order, 1.0, rng.random())?;
        let mode = if rng.random_bool(0.5) {
            SegmentMode::SingleBreak
        } else {
            SegmentMode::DoubleBreak
        };
        let spec = SeparatorSpec::new([task.separator_id], mode);
        let mut batch = Vec::with_capacity(queries);
        for q in 0..queries {
            let mut qg = sample_group(&old, &task, q, g, rng.random())?;
            for r in &mut qg.group.responses {
                r.reward = rng.random_range(0.0..1.0);
                r.segmentation = Some(segment(&r.token_ids(), &spec)?);
            }
            batch.push(qg);
        }
        let mut policy = old;
        for l in policy.logits_mut() {
            *l += rng.random_range(-perturbation..=perturbation);
        }
        Ok(Self { policy, batch })
    }

    /// The same batch with every response re-segmented under `spec`.
    pub fn resegmented(&self, spec: &SeparatorSpec) -> Result<Self> {
        let mut out = self.clone();
        for qg in &mut out.batch {
            for r in &mut qg.group.responses {
                r.segmentation = Some(segment(&r.token_ids(), spec)?);
            }
        }
        Ok(out)
    }
}

/// One named surrogate under test and the logit perturbation it is run at.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: &'static str,
    pub surrogate: Surrogate,
    pub perturbation: f64,
}

/// GRPO, GSPO and SSPO, each unclipped and clipped; SSPO clipped both with
/// fixed and with entropy-adaptive bounds.
pub fn default_cases() -> Vec<Case> {
    let open = ClipBounds::UNBOUNDED;
    let fixed = ClipBounds::symmetric(0.2).expect("valid eps");
    let case = |name, surrogate, perturbation| Case {
        name,
        surrogate,
        perturbation,
    };
    vec![
        case("grpo_unclipped", Surrogate::Grpo { bounds: open }, 0.3),
        case("grpo_clipped", Surrogate::Grpo { bounds: fixed }, 0.6),
        case("gspo_unclipped", Surrogate::Gspo { bounds: open }, 0.3),
        case("gspo_clipped", Surrogate::Gspo { bounds: fixed }, 0.6),
        case(
            "sspo_unclipped",
            Surrogate::Sspo {
                clip: EntropyConfig::fixed(open),
            },
            0.3,
        ),
        case(
            "sspo_clipped",
            Surrogate::Sspo {
                clip: EntropyConfig::fixed(fixed),
            },
            0.6,
        ),
        case(
            "sspo_adaptive",
            Surrogate::Sspo {
                clip: EntropyConfig::default(),
            },
            1.5,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradRow {
    pub instance: usize,
    pub algorithm: &'static str,
    pub param: usize,
    pub analytic: f64,
    /// Empty where the oracle flagged a clip-branch tie.
    pub numeric: Option<f64>,
    pub rel_err: Option<f64>,
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseSummary {
    pub name: &'static str,
    pub instances: usize,
    pub params_checked: usize,
    pub ties: usize,
    /// Instances where at least one token was clipped.
    pub clipped_instances: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    /// Rows with a nonzero analytic or numeric value, or a tie.
    pub rows: Vec<GradRow>,
    pub summaries: Vec<CaseSummary>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.summaries.iter().map(|s| s.max_rel_error).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Runs every case on `instances` random instances seeded from `seed`.
pub fn run_gradcheck(
    cases: &[Case],
    instances: usize,
    seed: u64,
    step: f64,
) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    for case in cases {
        let mut summary = CaseSummary {
            name: case.name,
            ..CaseSummary::default()
        };
        for k in 0..instances {
            let inst = Instance::random(seed.wrapping_add(k as u64), case.perturbation)?;
            let analytic = objective_gradient(&inst.policy, &inst.batch, &case.surrogate)?;
            let fd = finite_difference_gradient(&inst.policy, &inst.batch, &case.surrogate, step)?;
            let clipped = sspo_core::batch_objective(&inst.policy, &inst.batch, &case.surrogate)?
                .clipped_tokens;
            summary.instances += 1;
            summary.clipped_instances += usize::from(clipped > 0);
            summary.ties += fd.ties.len();
            for (p, (&a, n)) in analytic.iter().zip(&fd.gradient).enumerate() {
                let rel_err = n.map(|n| relative_error(a, n));
                if let Some(e) = rel_err {
                    summary.params_checked += 1;
                    summary.max_rel_error = summary.max_rel_error.max(e);
                }
                if a != 0.0 || n.is_none_or(|n| n != 0.0) {
                    report.rows.push(GradRow {
                        instance: k,
                        algorithm: case.name,
                        param: p,
                        analytic: a,
                        numeric: *n,
                        rel_err,
                        tie: n.is_none(),
                    });
                }
            }
        }
        report.summaries.push(summary);
    }
    Ok(report)
}
