//! `metrics.csv`: one row per (series, step).
//!
//! Columns, in order:
//! `series,step,mean_reward,objective,clip_fraction,mean_segment_entropy,mean_policy_entropy,grad_norm`.
//! Floats are written in shortest round-trip form, so reading the file back
//! reproduces the metrics bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sspo_core::StepMetrics;

use crate::error::Result;

pub const COLUMNS: [&str; 8] = [
    "series",
    "step",
    "mean_reward",
    "objective",
    "clip_fraction",
    "mean_segment_entropy",
    "mean_policy_entropy",
    "grad_norm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    series: String,
    step: usize,
    mean_reward: f64,
    objective: f64,
    clip_fraction: f64,
    mean_segment_entropy: f64,
    mean_policy_entropy: f64,
    grad_norm: f64,
}

/// Named metric series, e.g. one per algorithm.
pub type Series = Vec<(String, Vec<StepMetrics>)>;

pub fn write_metrics(out: impl Write, series: &[(String, Vec<StepMetrics>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (name, steps) in series {
        for m in steps {
            w.serialize(Row {
                series: name.clone(),
                step: m.step,
                mean_reward: m.mean_reward,
                objective: m.objective,
                clip_fraction: m.clip_fraction,
                mean_segment_entropy: m.mean_segment_entropy,
                mean_policy_entropy: m.mean_policy_entropy,
                grad_norm: m.grad_norm,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads series back in order of first appearance.
pub fn read_metrics(input: impl Read) -> Result<Series> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Series = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let m = StepMetrics {
            step: row.step,
            mean_reward: row.mean_reward,
            objective: row.objective,
            clip_fraction: row.clip_fraction,
            mean_segment_entropy: row.mean_segment_entropy,
            mean_policy_entropy: row.mean_policy_entropy,
            grad_norm: row.grad_norm,
        };
        match out.iter_mut().find(|(name, _)| *name == row.series) {
            Some((_, steps)) => steps.push(m),
            None => out.push((row.series, vec![m])),
        }
    }
    Ok(out)
}
