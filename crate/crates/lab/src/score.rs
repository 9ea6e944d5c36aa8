//! Offline scoring of parsed rollout logs.

use std::io::Write;

use serde::Serialize;
use sspo_core::{
    group_advantages, Algorithm, ClipBounds, ClipFractionRow,
    EntropyConfig, ObjectiveReport, Surrogate,
};

use crate::config::RunConfig;
use crate::error::Result;
use crate::rollout_log::{fill_segmentation, LoggedGroup};

/// Clip settings for the four algorithms, as in a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSettings {
    pub clip_eps: f64,
    pub entropy: EntropyConfig,
}

impl ScoreSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            clip_eps: cfg.clip_eps,
            entropy: cfg.entropy_config()?,
        })
    }

    pub fn surrogate(&self, algorithm: Algorithm) -> Result<Surrogate> {
        let fixed = ClipBounds::symmetric(self.clip_eps)?;
        Ok(match algorithm {
            Algorithm::Grpo => Surrogate::Grpo { bounds: fixed },
            Algorithm::Gspo => Surrogate::Gspo { bounds: fixed },
            Algorithm::Sspo => Surrogate::Sspo { clip: self.entropy },
            Algorithm::SspoNoEntropyClip => Surrogate::Sspo {
                clip: EntropyConfig::fixed(fixed),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub step: Option<usize>,
    pub query_id: String,
    pub algorithm: &'static str,
    pub objective: f64,
    pub clipped_tokens: usize,
    pub total_tokens: usize,
    pub clip_fraction: f64,
}

/// Mean of per-group objectives over the groups of one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepObjective {
    pub step: Option<usize>,
    pub algorithm: &'static str,
    pub objective: f64,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub steps: Vec<StepObjective>,
    /// Clip fraction per algorithm over all tokens in the log.
    pub clip_table: Vec<ClipFractionRow>,
}

/// Scores every group under all four algorithms.
///
/// Responses without explicit boundaries must already be segmented (see
/// [`fill_segmentation`]).
pub fn score_groups(groups: &[LoggedGroup], settings: &ScoreSettings) -> Result<ScoreReport> {
    let mut rows = Vec::new();
    let mut per_algorithm: Vec<(&'static str, Vec<ObjectiveReport>)> = Vec::new();
    for algorithm in Algorithm::ALL {
        let surrogate = settings.surrogate(algorithm)?;
        let mut reports = Vec::with_capacity(groups.len());
        for lg in groups {
            let adv = group_advantages(&lg.group.rewards())?;
            let report = surrogate.evaluate(&lg.group, &adv)?;
            rows.push(ScoreRow {
                step: lg.step,
                query_id: lg.group.query_id.clone(),
                algorithm: algorithm.name(),
                objective: report.value,
                clipped_tokens: report.clipped_tokens,
                total_tokens: report.total_tokens,
                clip_fraction: report.clip_fraction,
            });
            reports.push(report);
        }
        per_algorithm.push((algorithm.name(), reports));
    }

    let mut steps = Vec::new();
    for algorithm in Algorithm::ALL {
        let mut current: Option<(Option<usize>, f64, usize)> = None;
        let mut flush = |c: Option<(Option<usize>, f64, usize)>| {
            if let Some((step, sum, n)) = c {
                steps.push(StepObjective {
                    step,
                    algorithm: algorithm.name(),
                    objective: sum / n as f64,
                    groups: n,
                });
            }
        };
        for row in rows.iter().filter(|r| r.algorithm == algorithm.name()) {
            match &mut current {
                Some((step, sum, n)) if *step == row.step => {
                    *sum += row.objective;
                    *n += 1;
                }
                _ => {
                    flush(current.take());
                    current = Some((row.step, row.objective, 1));
                }
            }
        }
        flush(current);
    }

    let clip_table = per_algorithm
        .iter()
        .map(|(name, reports)| {
            let clipped_tokens: usize = reports.iter().map(|r| r.clipped_tokens).sum();
            let total_tokens: usize = reports.iter().map(|r| r.total_tokens).sum();
            ClipFractionRow {
                label: name.to_string(),
                clipped_tokens,
                total_tokens,
                clip_fraction: if total_tokens == 0 {
                    0.0
                } else {
                    clipped_tokens as f64 / total_tokens as f64
                },
            }
        })
        .collect();
    Ok(ScoreReport {
        rows,
        steps,
        clip_table,
    })
}

/// Segments what needs segmenting, then scores.
pub fn score_log(
    mut groups: Vec<LoggedGroup>,
    cfg: &RunConfig,
) -> Result<(Vec<LoggedGroup>, ScoreReport)> {
    fill_segmentation(&mut groups, &cfg.separator_spec()?)?;
    let report = score_groups(&groups, &ScoreSettings::from_config(cfg)?)?;
    Ok((groups, report))
}

#[derive(Serialize)]
struct ClipRow<'a> {
    algorithm: &'a str,
    clipped_tokens: usize,
    total_tokens: usize,
    clip_fraction: f64,
}

impl ScoreReport {
    /// `scores.csv`: one row per (group, algorithm).
    pub fn write_scores(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `step_objectives.csv`: per-step mean objective per algorithm.
    pub fn write_steps(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.steps {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `clip_report.csv`: token clip fraction per algorithm.
    pub fn write_clip_table(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.clip_table {
            w.serialize(ClipRow {
                algorithm: &row.label,
                clipped_tokens: row.clipped_tokens,
                total_tokens: row.total_tokens,
                clip_fraction: row.clip_fraction,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn clip_fraction(&self, algorithm: Algorithm) -> Option<f64> {
        self.clip_table
            .iter()
            .find(|r| r.label == algorithm.name())
            .map(|r| r.clip_fraction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sspo_core::{Response, RolloutGroup, Segmentation, Span, TokenRecord};

    fn group() -> LoggedGroup {
        let mk = |reward: f64, shift: f64| {
            let tokens = (0..4)
                .map(|t| TokenRecord::new(2, -1.0, -1.0 + shift * t as f64).with_entropy(0.3))
                .collect();
            let mut r = Response::new(tokens, reward);
            r.segmentation =
                Some(Segmentation::from_spans(vec![Span::new(0, 2), Span::new(2, 4)], 4).unwrap());
            r
        };
        LoggedGroup {
            step: Some(0),
            group: RolloutGroup::new("q", vec![mk(1.0, 0.1), mk(0.0, -0.05)]),
        }
    }

    #[test]
    fn four_algorithms_per_group() {
        let settings = ScoreSettings::from_config(&RunConfig::default()).unwrap();
        let report = score_groups(&[group(), group()], &settings).unwrap();
        assert_eq!(report.rows.len(), 8);
        assert_eq!(report.steps.len(), 4);
        assert!(report.steps.iter().all(|s| s.groups == 2));
        assert_eq!(report.clip_table.len(), 4);
        for s in &report.steps {
            let row = report.rows.iter().find(|r| r.algorithm == s.algorithm).unwrap();
            assert_eq!(s.objective, row.objective);
        }
    }

    #[test]
    fn missing_entropy_is_an_error_in_adaptive_mode() {
        let mut g = group();
        g.group.responses[1].tokens[2].old_entropy = None;
        let settings = ScoreSettings::from_config(&RunConfig::default()).unwrap();
        assert!(score_groups(&[g.clone()], &settings).is_err());
        let fixed = RunConfig {
            entropy_mode: "fixed".into(),
            ..RunConfig::default()
        };
        assert!(score_groups(&[g], &ScoreSettings::from_config(&fixed).unwrap()).is_ok());
    }
}
