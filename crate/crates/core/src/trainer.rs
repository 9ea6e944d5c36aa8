//! Rollout-and-update loop on the toy policy.
//!
//! Each step snapshots the current parameters as the sampling policy,
//! samples one group per batch query, then runs `epochs` rounds of plain
//! gradient ascent on the chosen surrogate over that fixed batch.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{token_entropies, segment_entropy, EntropyConfig};
use crate::error::{Error, Result};
use crate::gradient::evaluate_batch;
use crate::math::sqrt;
use crate::objective::{ClipBounds, Surrogate};
use crate::segment::{segment, SeparatorSpec};
use crate::toy::{mix_seed, sample_group, PolicyParams, QueryGroup, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Grpo,
    Gspo,
    #[default]
    Sspo,
    SspoNoEntropyClip,
}

impl Algorithm {
    pub const ALL: [Self; 4] = [Self::Grpo, Self::Gspo, Self::Sspo, Self::SspoNoEntropyClip];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Grpo => "grpo",
            Self::Gspo => "gspo",
            Self::Sspo => "sspo",
            Self::SspoNoEntropyClip => "sspo_no_entropy_clip",
        }
    }
}

impl core::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Optimizer {
    /// Plain gradient ascent.
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub group_size: usize,
    pub queries_per_batch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub epochs: usize,
    pub segmentation: SeparatorSpec,
    /// Adaptive or fixed segment bounds for `sspo`.
    pub entropy: EntropyConfig,
    /// Symmetric clip width for `grpo`, `gspo` and `sspo_no_entropy_clip`.
    pub clip_eps: f64,
    pub seed: u64,
    pub task: TaskSpec,
    pub context_order: usize,
    /// Half-width of the uniform logit initialization; 0 starts uniform.
    pub init_scale: f64,
    pub optimizer: Optimizer,
    /// Resample groups whose rewards are all equal, up to this many extra tries.
    pub resample_degenerate: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let task = TaskSpec::default();
        Self {
            algorithm: Algorithm::Sspo,
            group_size: 8,
            queries_per_batch: 4,
            learning_rate: 10.0,
            steps: 200,
            epochs: 1,
            segmentation: SeparatorSpec::new([task.separator_id], Default::default()),
            entropy: EntropyConfig::default(),
            clip_eps: 0.2,
            seed: 0,
            task,
            context_order: 2,
            init_scale: 0.0,
            optimizer: Optimizer::Sgd,
            resample_degenerate: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.group_size < 2 {
            return fail(format!("group_size must be at least 2 (got {})", self.group_size));
        }
        if self.queries_per_batch == 0 || self.epochs == 0 {
            return fail("queries_per_batch and epochs must be positive".to_string());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive (got {})", self.learning_rate));
        }
        if self.context_order > 2 {
            return fail(format!("context_order must be 0, 1 or 2 (got {})", self.context_order));
        }
        if !(self.init_scale >= 0.0) {
            return fail(format!("init_scale must be non-negative (got {})", self.init_scale));
        }
        ClipBounds::symmetric(self.clip_eps)?;
        self.entropy.validate()?;
        self.task.validate()
    }

    /// The surrogate this configuration optimizes.
    pub fn surrogate(&self) -> Result<Surrogate> {
        let fixed = ClipBounds::symmetric(self.clip_eps)?;
        Ok(match self.algorithm {
            Algorithm::Grpo => Surrogate::Grpo { bounds: fixed },
            Algorithm::Gspo => Surrogate::Gspo { bounds: fixed },
            Algorithm::Sspo => Surrogate::Sspo { clip: self.entropy },
            Algorithm::SspoNoEntropyClip => Surrogate::Sspo {
                clip: EntropyConfig::fixed(fixed),
            },
        })
    }

    /// Everything except the algorithm and clip settings, for run alignment.
    fn shared_settings(&self) -> TrainConfig {
        TrainConfig {
            algorithm: Algorithm::default(),
            entropy: EntropyConfig::default(),
            clip_eps: 0.2,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    /// Objective at the last epoch's evaluation point.
    pub objective: f64,
    pub clip_fraction: f64,
    pub mean_segment_entropy: f64,
    /// Token-mean entropy of the sampling policy along the sampled responses.
    pub mean_policy_entropy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub metrics: StepMetrics,
    /// The batch scored at the last epoch's evaluation point.
    pub batch: Vec<QueryGroup>,
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

pub struct Trainer {
    config: TrainConfig,
    surrogate: Surrogate,
    policy: PolicyParams,
    adam: Option<AdamState>,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let surrogate = config.surrogate()?;
        let policy = PolicyParams::random(
            config.task.num_queries,
            config.task.vocab_size,
            config.context_order,
            config.init_scale,
            mix_seed(&[config.seed, u64::MAX]),
        )?;
        let adam = match config.optimizer {
            Optimizer::Sgd => None,
            Optimizer::Adam { .. } => Some(AdamState {
                m: vec![0.0; policy.logits().len()],
                v: vec![0.0; policy.logits().len()],
                t: 0,
            }),
        };
        Ok(Self {
            config,
            surrogate,
            policy,
            adam,
            step: 0,
        })
    }

    pub fn policy(&self) -> &PolicyParams {
        &self.policy
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    fn sample_batch(&self, old: &PolicyParams) -> Result<Vec<QueryGroup>> {
        let cfg = &self.config;
        let mut batch = Vec::with_capacity(cfg.queries_per_batch);
        for slot in 0..cfg.queries_per_batch {
            let query = (self.step * cfg.queries_per_batch + slot) % cfg.task.num_queries;
            let mut attempt = 0;
            let mut qg = loop {
                let seed = mix_seed(&[cfg.seed, self.step as u64, slot as u64, attempt as u64]);
                let qg = sample_group(old, &cfg.task, query, cfg.group_size, seed)?;
                let rewards = qg.group.rewards();
                let degenerate = rewards.iter().all(|&r| r == rewards[0]);
                if !degenerate || attempt >= cfg.resample_degenerate {
                    break qg;
                }
                attempt += 1;
            };
            for response in &mut qg.group.responses {
                response.segmentation = Some(segment(&response.token_ids(), &cfg.segmentation)?);
            }
            batch.push(qg);
        }
        Ok(batch)
    }

    fn apply(&mut self, gradient: &[f64]) {
        let lr = self.config.learning_rate;
        match (self.config.optimizer, self.adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, epsilon }, Some(state)) => {
                state.t += 1;
                let c1 = 1.0 - libm::pow(beta1, state.t as f64);
                let c2 = 1.0 - libm::pow(beta2, state.t as f64);
                for (k, (l, g)) in self.policy.logits_mut().iter_mut().zip(gradient).enumerate() {
                    state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
                    state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
                    *l += lr * (state.m[k] / c1) / (sqrt(state.v[k] / c2) + epsilon);
                }
            }
            _ => {
                for (l, g) in self.policy.logits_mut().iter_mut().zip(gradient) {
                    *l += lr * g;
                }
            }
        }
    }

    /// Runs one rollout phase and its update epochs.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let old = self.policy.clone();
        let batch = self.sample_batch(&old)?;

        let mut last = None;
        for _ in 0..self.config.epochs {
            let eval = evaluate_batch(&self.policy, &batch, &self.surrogate, true)?;
            let gradient = eval.gradient.as_deref().unwrap_or_default();
            if let Some(k) = gradient.iter().position(|g| !g.is_finite()) {
                let state = k / self.policy.vocab_size();
                let query = state / (self.policy.num_states() / self.policy.num_queries());
                let dump = batch
                    .iter()
                    .find(|qg| qg.query == query)
                    .map(|qg| format!("{:#?}", qg.group))
                    .unwrap_or_default();
                return Err(Error::NonFiniteGradient {
                    step: self.step,
                    query,
                    dump,
                });
            }
            let norm = sqrt(gradient.iter().map(|g| g * g).sum());
            self.apply(gradient);
            last = Some((eval, norm));
        }
        let (eval, grad_norm) = last.expect("epochs >= 1");

        let metrics = StepMetrics {
            step: self.step,
            mean_reward: mean_reward(&batch),
            objective: eval.report.value,
            clip_fraction: eval.report.clip_fraction,
            mean_segment_entropy: mean_segment_entropy(&batch)?,
            mean_policy_entropy: mean_token_entropy(&batch)?,
            grad_norm,
        };
        self.step += 1;
        Ok(StepOutcome {
            metrics,
            batch: eval.scored,
        })
    }
}

fn mean_reward(batch: &[QueryGroup]) -> f64 {
    let (sum, n) = batch
        .iter()
        .flat_map(|qg| qg.group.responses.iter())
        .fold((0.0, 0usize), |(s, n), r| (s + r.reward, n + 1));
    sum / n.max(1) as f64
}

fn mean_token_entropy(batch: &[QueryGroup]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for qg in batch {
        for i in 0..qg.group.size() {
            let h = token_entropies(&qg.group, i)?;
            sum += h.iter().sum::<f64>();
            n += h.len();
        }
    }
    Ok(sum / n.max(1) as f64)
}

fn mean_segment_entropy(batch: &[QueryGroup]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for qg in batch {
        for (i, response) in qg.group.responses.iter().enumerate() {
            let h = token_entropies(&qg.group, i)?;
            if let Some(seg) = &response.segmentation {
                for span in seg.spans() {
                    sum += segment_entropy(&h[span.range()])?;
                    n += 1;
                }
            }
        }
    }
    Ok(sum / n.max(1) as f64)
}

/// Trains for `config.steps` steps.
pub fn train(config: &TrainConfig) -> Result<Vec<StepMetrics>> {
    let mut trainer = Trainer::new(config.clone())?;
    (0..config.steps)
        .map(|_| trainer.step().map(|o| o.metrics))
        .collect()
}

/// One metrics series per configuration, all sharing rollout seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRun {
    pub series: Vec<(String, Vec<StepMetrics>)>,
}

/// Trains each configuration on the same task and seed.
///
/// Configurations may differ only in algorithm and clip settings.
pub fn compare_run(configs: &[TrainConfig]) -> Result<CompareRun> {
    if let Some(first) = configs.first() {
        let shared = first.shared_settings();
        for (k, c) in configs.iter().enumerate().skip(1) {
            if c.shared_settings() != shared {
                return Err(Error::Config(format!(
                    "configuration {k} differs from configuration 0 in more than algorithm and clip settings"
                )));
            }
        }
    }
    let series = configs
        .iter()
        .map(|c| Ok((c.algorithm.name().to_string(), train(c)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareRun { series })
}
