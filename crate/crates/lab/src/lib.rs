//! File formats, reports and command-line plumbing around `sspo-core`.

pub mod bounds;
pub mod config;
mod error;
pub mod gradcheck;
pub mod metrics;
pub mod report;
pub mod rollout_log;
pub mod run;
pub mod score;
pub mod svg;

pub use config::RunConfig;
pub use error::{LabError, Result};
pub use report::emit_report;
pub use rollout_log::{parse_rollout_log, ParsedLog, LoggedGroup};
pub use sspo_core as core;
