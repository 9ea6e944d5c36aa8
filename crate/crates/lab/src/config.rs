//! Flat TOML run configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected. `resolved()` renders the full configuration back, and that
//! text re-parses to the same value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sspo_core::{
    Algorithm, ClipBounds, ClipMode, EntropyConfig, Optimizer, SegmentMode, SeparatorSpec,
    TaskKind, TaskSpec, TrainConfig,
};

use crate::error::{io_err, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// grpo | gspo | sspo | sspo_no_entropy_clip
    pub algorithm: String,
    pub group_size: usize,
    pub queries_per_batch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    /// Optimization passes over each rollout batch.
    pub epochs: usize,
    pub seed: u64,
    /// Symmetric width for the fixed-clip algorithms.
    pub clip_eps: f64,

    /// single_break | double_break | token_level | response_level
    pub segment_mode: String,
    pub separator_ids: Vec<u32>,

    /// adaptive | fixed
    pub entropy_mode: String,
    pub alpha: f64,
    /// Bounds used by `sspo` when `entropy_mode = "fixed"`.
    pub fixed_low: f64,
    pub fixed_high: f64,

    /// sequence-copy | modular-arithmetic | pattern-completion
    pub task: String,
    pub num_queries: usize,
    pub target_len: usize,
    pub line_len: usize,
    pub vocab_size: usize,
    pub separator_id: u32,
    pub end_id: u32,
    pub max_len: usize,

    pub context_order: usize,
    pub init_scale: f64,
    /// sgd | adam
    pub optimizer: String,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub resample_degenerate: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            algorithm: t.algorithm.name().to_string(),
            group_size: t.group_size,
            queries_per_batch: t.queries_per_batch,
            learning_rate: t.learning_rate,
            steps: t.steps,
            epochs: t.epochs,
            seed: t.seed,
            clip_eps: t.clip_eps,
            segment_mode: mode_name(t.segmentation.mode).to_string(),
            separator_ids: t.segmentation.separator_token_ids.iter().copied().collect(),
            entropy_mode: "adaptive".to_string(),
            alpha: t.entropy.alpha,
            fixed_low: 1.0 - t.clip_eps,
            fixed_high: 1.0 + t.clip_eps,
            task: t.task.kind.name().to_string(),
            num_queries: t.task.num_queries,
            target_len: t.task.target_len,
            line_len: t.task.line_len,
            vocab_size: t.task.vocab_size,
            separator_id: t.task.separator_id,
            end_id: t.task.end_id,
            max_len: t.task.max_len,
            context_order: t.context_order,
            init_scale: t.init_scale,
            optimizer: "sgd".to_string(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            resample_degenerate: t.resample_degenerate,
        }
    }
}

fn mode_name(mode: SegmentMode) -> &'static str {
    match mode {
        SegmentMode::SingleBreak => "single_break",
        SegmentMode::DoubleBreak => "double_break",
        SegmentMode::TokenLevel => "token_level",
        SegmentMode::ResponseLevel => "response_level",
    }
}

fn parse_mode(s: &str) -> Result<SegmentMode> {
    Ok(match s {
        "single_break" => SegmentMode::SingleBreak,
        "double_break" => SegmentMode::DoubleBreak,
        "token_level" => SegmentMode::TokenLevel,
        "response_level" => SegmentMode::ResponseLevel,
        other => return Err(LabError::Config(format!("unknown segment_mode {other:?}"))),
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Reads `path` (if any) and applies `key=value` overrides on top.
    ///
    /// Override values are parsed as TOML; anything that doesn't parse is
    /// taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_err(p))?;
                text.parse::<toml::Table>()
                    .map_err(|e| LabError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("override {item:?} is not key=value")))?;
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.trim().to_string(), value);
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        cfg.train_config()?;
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn resolved(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn separator_spec(&self) -> Result<SeparatorSpec> {
        Ok(SeparatorSpec::new(
            self.separator_ids.iter().copied(),
            parse_mode(&self.segment_mode)?,
        ))
    }

    pub fn entropy_config(&self) -> Result<EntropyConfig> {
        let mode = match self.entropy_mode.as_str() {
            "adaptive" => ClipMode::Adaptive,
            "fixed" => ClipMode::Fixed(ClipBounds::new(self.fixed_low, self.fixed_high)?),
            other => return Err(LabError::Config(format!("unknown entropy_mode {other:?}"))),
        };
        let cfg = EntropyConfig {
            alpha: self.alpha,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        Ok(TaskSpec {
            kind: self.task.parse::<TaskKind>()?,
            num_queries: self.num_queries,
            target_len: self.target_len,
            line_len: self.line_len,
            vocab_size: self.vocab_size,
            separator_id: self.separator_id,
            end_id: self.end_id,
            max_len: self.max_len,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "adam" => Optimizer::Adam {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
            },
            other => return Err(LabError::Config(format!("unknown optimizer {other:?}"))),
        };
        let cfg = TrainConfig {
            algorithm: self.algorithm.parse::<Algorithm>()?,
            group_size: self.group_size,
            queries_per_batch: self.queries_per_batch,
            learning_rate: self.learning_rate,
            steps: self.steps,
            epochs: self.epochs,
            segmentation: self.separator_spec()?,
            entropy: self.entropy_config()?,
            clip_eps: self.clip_eps,
            seed: self.seed,
            task: self.task_spec()?,
            context_order: self.context_order,
            init_scale: self.init_scale,
            optimizer,
            resample_degenerate: self.resample_degenerate,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
