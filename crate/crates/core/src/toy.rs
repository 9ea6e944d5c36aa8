//! Tabular softmax policy and synthetic verifiable-reward tasks.
//!
//! The policy conditions on the query and the last `context_order` tokens,
//! so `log pi` and its gradient are available in closed form.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::rollout::{Response, RolloutGroup, TokenRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    logits: Vec<f64>,
    vocab_size: usize,
    context_order: usize,
    num_queries: usize,
}

/// A next-token distribution and its entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub entropy: f64,
}

impl PolicyParams {
    /// Uniform policy (all logits zero).
    pub fn zeros(num_queries: usize, vocab_size: usize, context_order: usize) -> Result<Self> {
        if num_queries == 0 || vocab_size < 2 {
            return Err(Error::Config(format!(
                "policy needs at least one query and two tokens (got {num_queries}, {vocab_size})"
            )));
        }
        if context_order > 2 {
            return Err(Error::Config(format!(
                "context order must be 0, 1 or 2 (got {context_order})"
            )));
        }
        let states = num_queries * (vocab_size + 1).pow(context_order as u32);
        Ok(Self {
            logits: vec![0.0; states * vocab_size],
            vocab_size,
            context_order,
            num_queries,
        })
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random(
        num_queries: usize,
        vocab_size: usize,
        context_order: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut p = Self::zeros(num_queries, vocab_size, context_order)?;
        if scale != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for l in &mut p.logits {
                *l = scale * (2.0 * unit_f64(&mut rng) - 1.0);
            }
        }
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn num_queries(&self) -> usize {
        self.num_queries
    }

    pub fn num_states(&self) -> usize {
        self.logits.len() / self.vocab_size
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// State for generating the token after `prefix` in reply to `query`.
    /// Missing history is padded with a start symbol.
    pub fn state_index(&self, query: usize, prefix: &[u32]) -> usize {
        let base = self.vocab_size + 1;
        let mut idx = query;
        for k in (1..=self.context_order).rev() {
            let symbol = if prefix.len() >= k {
                prefix[prefix.len() - k] as usize
            } else {
                self.vocab_size
            };
            idx = idx * base + symbol;
        }
        idx
    }

    fn row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.vocab_size..(state + 1) * self.vocab_size]
    }

    pub fn next_token_distribution(&self, state: usize) -> Distribution {
        let row = self.row(state);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = row.iter().map(|l| exp(l - max)).collect();
        let z: f64 = shifted.iter().sum();
        let log_z = ln(z);
        let probs: Vec<f64> = shifted.iter().map(|e| e / z).collect();
        let log_probs: Vec<f64> = row.iter().map(|l| l - max - log_z).collect();
        let entropy = -probs
            .iter()
            .zip(&log_probs)
            .map(|(p, lp)| p * lp)
            .sum::<f64>();
        Distribution {
            probs,
            log_probs,
            entropy,
        }
    }

    pub fn log_prob(&self, state: usize, token: u32) -> f64 {
        let row = self.row(state);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|l| exp(l - max)).sum();
        row[token as usize] - max - ln(z)
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// SplitMix64 finalizer used to derive independent seed streams.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskKind {
    /// Reproduce the query's source sequence.
    #[default]
    SequenceCopy,
    /// Answer lines are `(a + k b) mod m` for `k = 0, 1, ...`.
    ModularArithmetic,
    /// Continue an arithmetic progression over the content alphabet.
    PatternCompletion,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SequenceCopy => "sequence-copy",
            Self::ModularArithmetic => "modular-arithmetic",
            Self::PatternCompletion => "pattern-completion",
        }
    }
}

impl core::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence-copy" => Ok(Self::SequenceCopy),
            "modular-arithmetic" => Ok(Self::ModularArithmetic),
            "pattern-completion" => Ok(Self::PatternCompletion),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }
}

/// A family of queries with exactly checkable answers.
///
/// The answer to every query is `target_len` content symbols with a
/// separator after every `line_len` of them, so answers span several lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub num_queries: usize,
    pub target_len: usize,
    pub line_len: usize,
    pub vocab_size: usize,
    pub separator_id: u32,
    pub end_id: u32,
    pub max_len: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::SequenceCopy,
            num_queries: 4,
            target_len: 2,
            line_len: 1,
            vocab_size: 6,
            separator_id: 1,
            end_id: 0,
            max_len: 3,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.vocab_size < 3 {
            return fail("vocab_size must leave room for end, separator and content tokens");
        }
        if self.separator_id as usize >= self.vocab_size || self.end_id as usize >= self.vocab_size {
            return fail("separator_id and end_id must be below vocab_size");
        }
        if self.separator_id == self.end_id {
            return fail("separator_id and end_id must differ");
        }
        if self.num_queries == 0 || self.target_len == 0 || self.line_len == 0 || self.max_len == 0 {
            return fail("num_queries, target_len, line_len and max_len must be positive");
        }
        if self.kind == TaskKind::PatternCompletion && self.content_tokens().len() < 2 {
            return fail("pattern-completion needs at least two content tokens");
        }
        if self.max_len < self.target(0).len() {
            return fail("max_len is shorter than the answer");
        }
        Ok(())
    }

    /// Vocabulary entries that are neither the end token nor the separator.
    pub fn content_tokens(&self) -> Vec<u32> {
        (0..self.vocab_size as u32)
            .filter(|&t| t != self.end_id && t != self.separator_id)
            .collect()
    }

    fn symbols(&self, query: usize) -> Vec<usize> {
        let c = self.content_tokens().len();
        let q = query;
        match self.kind {
            TaskKind::SequenceCopy => (0..self.target_len).map(|k| (q + k) % c).collect(),
            TaskKind::ModularArithmetic => {
                let (a, b) = (q % c, (q / c) % c);
                (0..self.target_len).map(|k| (a + k * b) % c).collect()
            }
            TaskKind::PatternCompletion => {
                let start = q % c;
                let stride = 1 + (q / c) % (c - 1);
                (0..self.target_len).map(|k| (start + k * stride) % c).collect()
            }
        }
    }

    /// The exact answer for `query`, separators included.
    pub fn target(&self, query: usize) -> Vec<u32> {
        let content = self.content_tokens();
        let symbols = self.symbols(query);
        let mut out = Vec::with_capacity(symbols.len() * 2);
        for (k, s) in symbols.iter().enumerate() {
            if k > 0 && k % self.line_len == 0 {
                out.push(self.separator_id);
            }
            out.push(content[*s]);
        }
        out
    }

    /// 1.0 when the tokens before the first end token equal the target.
    pub fn reward(&self, query: usize, response: &[u32]) -> f64 {
        let answer_len = response
            .iter()
            .position(|&t| t == self.end_id)
            .unwrap_or(response.len());
        if answer_len == 0 {
            return 0.0;
        }
        if response[..answer_len] == self.target(query)[..] {
            1.0
        } else {
            0.0
        }
    }
}

/// A rollout group with the query index the toy policy conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query: usize,
    pub group: RolloutGroup,
}

/// Samples `g` responses to `query` from `policy`.
///
/// Each token records its log-probability and the entropy of the full
/// distribution it was drawn from; `new_logp` starts equal to `old_logp`.
pub fn sample_group(
    policy: &PolicyParams,
    task: &TaskSpec,
    query: usize,
    g: usize,
    seed: u64,
) -> Result<QueryGroup> {
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    if query >= policy.num_queries() {
        return Err(Error::Config(format!(
            "query {query} outside the policy's {} queries",
            policy.num_queries()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut responses = Vec::with_capacity(g);
    for _ in 0..g {
        let mut ids: Vec<u32> = Vec::with_capacity(task.max_len);
        let mut tokens = Vec::with_capacity(task.max_len);
        while ids.len() < task.max_len {
            let dist = policy.next_token_distribution(policy.state_index(query, &ids));
            let token = draw(&dist.probs, unit_f64(&mut rng));
            let logp = dist.log_probs[token as usize];
            tokens.push(TokenRecord::new(token, logp, logp).with_entropy(dist.entropy));
            ids.push(token);
            if token == task.end_id {
                break;
            }
        }
        let reward = task.reward(query, &ids);
        responses.push(Response::new(tokens, reward));
    }
    Ok(QueryGroup {
        query,
        group: RolloutGroup::new(format!("{query}"), responses),
    })
}

fn draw(probs: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    (probs.len() - 1) as u32
}

/// Recomputes every token's `new_logp` under `policy`.
pub fn score_group(policy: &PolicyParams, batch: &mut QueryGroup) {
    let query = batch.query;
    for response in &mut batch.group.responses {
        let ids = response.token_ids();
        for (t, token) in response.tokens.iter_mut().enumerate() {
            token.new_logp = policy.log_prob(policy.state_index(query, &ids[..t]), token.token_id);
        }
    }
}
