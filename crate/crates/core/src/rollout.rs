//! Rollout data shared by every surrogate: per-token log-probabilities under
//! the sampling (old) policy and the current (new) policy, plus rewards.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::ln;
use crate::segment::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenRecord {
    pub token_id: u32,
    /// Log-probability under the sampling policy.
    pub old_logp: f64,
    /// Log-probability under the policy being optimized.
    pub new_logp: f64,
    /// Entropy (nats) of the sampling policy's full next-token distribution.
    pub old_entropy: Option<f64>,
}

impl TokenRecord {
    pub fn new(token_id: u32, old_logp: f64, new_logp: f64) -> Self {
        Self {
            token_id,
            old_logp,
            new_logp,
            old_entropy: None,
        }
    }

    pub fn with_entropy(mut self, entropy: f64) -> Self {
        self.old_entropy = Some(entropy);
        self
    }
}

/// `new_logp - old_logp`, the log of the token importance ratio.
pub fn token_log_ratio(token: &TokenRecord) -> Result<f64> {
    if !token.old_logp.is_finite() || !token.new_logp.is_finite() {
        return Err(Error::NonFinite("token log-probability"));
    }
    Ok(token.new_logp - token.old_logp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub tokens: Vec<TokenRecord>,
    pub reward: f64,
    pub segmentation: Option<Segmentation>,
}

impl Response {
    pub fn new(tokens: Vec<TokenRecord>, reward: f64) -> Self {
        Self {
            tokens,
            reward,
            segmentation: None,
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn token_ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.token_id).collect()
    }

    pub fn log_ratios(&self) -> Result<Vec<f64>> {
        self.tokens.iter().map(token_log_ratio).collect()
    }
}

/// The responses sampled for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub query_id: String,
    pub responses: Vec<Response>,
}

impl RolloutGroup {
    pub fn new(query_id: impl Into<String>, responses: Vec<Response>) -> Self {
        Self {
            query_id: query_id.into(),
            responses,
        }
    }

    pub fn size(&self) -> usize {
        self.responses.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.responses.iter().map(Response::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let violations = validate_group(self, None);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGroup(violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    GroupTooSmall { size: usize },
    EmptyResponse { response: usize },
    NonFiniteReward { response: usize },
    NonFiniteLogProb { response: usize, token: usize },
    PositiveLogProb { response: usize, token: usize },
    InvalidEntropy { response: usize, token: usize, value: f64 },
    SegmentationNotCovering { response: usize, covered: usize, len: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GroupTooSmall { size } => write!(f, "group size below 2 (got {size})"),
            Self::EmptyResponse { response } => write!(f, "response {response} is empty"),
            Self::NonFiniteReward { response } => {
                write!(f, "response {response} has a non-finite reward")
            }
            Self::NonFiniteLogProb { response, token } => write!(
                f,
                "response {response} token {token} has a non-finite log-probability"
            ),
            Self::PositiveLogProb { response, token } => write!(
                f,
                "response {response} token {token} has a positive log-probability"
            ),
            Self::InvalidEntropy {
                response,
                token,
                value,
            } => write!(
                f,
                "response {response} token {token} has entropy {value} outside [0, ln V]"
            ),
            Self::SegmentationNotCovering {
                response,
                covered,
                len,
            } => write!(
                f,
                "segmentation does not cover response {response} ({covered} of {len} tokens)"
            ),
        }
    }
}

/// Lists every invariant violation in `group`. An empty list means valid.
///
/// With `vocab_size`, entropies are also checked against `ln(vocab_size)`.
pub fn validate_group(group: &RolloutGroup, vocab_size: Option<usize>) -> Vec<Violation> {
    let mut out = Vec::new();
    if group.size() < 2 {
        out.push(Violation::GroupTooSmall { size: group.size() });
    }
    let max_entropy = vocab_size.map(|v| ln(v as f64) + 1e-9);
    for (i, response) in group.responses.iter().enumerate() {
        if response.tokens.is_empty() {
            out.push(Violation::EmptyResponse { response: i });
        }
        if !response.reward.is_finite() {
            out.push(Violation::NonFiniteReward { response: i });
        }
        for (t, token) in response.tokens.iter().enumerate() {
            if !token.old_logp.is_finite() || !token.new_logp.is_finite() {
                out.push(Violation::NonFiniteLogProb {
                    response: i,
                    token: t,
                });
            } else if token.old_logp > 0.0 || token.new_logp > 0.0 {
                out.push(Violation::PositiveLogProb {
                    response: i,
                    token: t,
                });
            }
            if let Some(h) = token.old_entropy {
                let too_big = max_entropy.is_some_and(|m| h > m);
                if !h.is_finite() || h < 0.0 || too_big {
                    out.push(Violation::InvalidEntropy {
                        response: i,
                        token: t,
                        value: h,
                    });
                }
            }
        }
        if let Some(seg) = &response.segmentation {
            if !seg.covers(response.len()) {
                out.push(Violation::SegmentationNotCovering {
                    response: i,
                    covered: seg.response_len(),
                    len: response.len(),
                });
            }
        }
    }
    out
}
