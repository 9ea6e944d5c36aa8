//! Group-relative clipped policy-gradient surrogates.
//!
//! Token-level (GRPO), response-level (GSPO) and sub-sentence-level (SSPO)
//! importance ratios over groups of sampled responses, entropy-adaptive clip
//! bounds, closed-form gradients against a tabular softmax policy, and a small
//! verifiable-reward environment to train that policy on.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod advantage;
pub mod entropy;
mod error;
pub mod gradient;
mod math;
pub mod objective;
pub mod rollout;
pub mod segment;
pub mod toy;
pub mod trainer;

pub use advantage::{group_advantages, AdvantageVector};
pub use entropy::{
    clip_bounds, segment_bounds, segment_entropy, token_entropies, token_entropy, ClipMode,
    EntropyConfig,
};
pub use error::{Error, Result};
pub use gradient::{
    batch_objective, central_difference, evaluate_batch, finite_difference_gradient,
    objective_gradient, relative_error, token_weights, BatchEvaluation, BatchReport,
    FiniteDifference, TokenWeights, RELATIVE_ERROR_FLOOR,
};
pub use objective::{
    clip_fraction_report, clipped_term, grpo_objective, gspo_objective, response_ratio,
    segment_ratio, sspo_objective, ClipBounds, ClipFractionRow, ClippedTerm, ObjectiveReport,
    Surrogate,
};
pub use rollout::{token_log_ratio, validate_group, Response, RolloutGroup, TokenRecord, Violation};
pub use segment::{segment, span_lengths, SegmentMode, Segmentation, SeparatorSpec, Span};
pub use toy::{sample_group, score_group, Distribution, PolicyParams, QueryGroup, TaskKind, TaskSpec};
pub use trainer::{
    compare_run, train, Algorithm, CompareRun, Optimizer, StepMetrics, StepOutcome, TrainConfig,
    Trainer,
};
