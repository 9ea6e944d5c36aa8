use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rollout::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("group size {0} is below 2")]
    GroupTooSmall(usize),
    #[error("invalid clip bounds: low {low}, high {high} (need 0 < low < high)")]
    InvalidBounds { low: f64, high: f64 },
    #[error("distribution is not normalized: {0}")]
    NotNormalized(String),
    #[error("negative {what}: {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("response {response} has no segmentation")]
    MissingSegmentation { response: usize },
    #[error("response {response} token {token} has no old-policy entropy; adaptive clipping needs it")]
    MissingEntropy { response: usize, token: usize },
    #[error("expected {expected} {what}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite {what} at query {query}, response {response}, token {token}")]
    NonFiniteAt {
        what: &'static str,
        query: usize,
        response: usize,
        token: usize,
    },
    #[error("invalid group: {}", ViolationList(.0))]
    InvalidGroup(Vec<Violation>),
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite gradient at step {step}, query {query}; offending group:\n{dump}")]
    NonFiniteGradient {
        step: usize,
        query: usize,
        dump: String,
    },
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
