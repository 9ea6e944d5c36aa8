//! `train` and `compare` runs with their on-disk outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sspo_core::{compare_run, Algorithm, StepMetrics, Trainer};

use crate::config::RunConfig;
use crate::error::{io_err, Result};
use crate::report::emit_report;
use crate::rollout_log::write_batch;

pub const CONFIG_FILE: &str = "config.toml";
pub const ROLLOUT_FILE: &str = "rollouts.jsonl";

fn write_config(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.resolved()).map_err(io_err(&path))
}

/// Trains one configuration. With `export_rollouts`, every step's final-epoch
/// batch goes to `rollouts.jsonl`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path, export_rollouts: bool) -> Result<Vec<StepMetrics>> {
    let train_cfg = cfg.train_config()?;
    write_config(cfg, out_dir)?;
    let mut log = if export_rollouts {
        let path = out_dir.join(ROLLOUT_FILE);
        Some((BufWriter::new(File::create(&path).map_err(io_err(&path))?), path))
    } else {
        None
    };
    let mut trainer = Trainer::new(train_cfg.clone())?;
    let mut metrics = Vec::with_capacity(train_cfg.steps);
    for _ in 0..train_cfg.steps {
        let outcome = trainer.step()?;
        if let Some((w, path)) = log.as_mut() {
            write_batch(&mut *w, outcome.metrics.step, &outcome.batch).map_err(io_err(&*path))?;
        }
        metrics.push(outcome.metrics);
    }
    if let Some((mut w, path)) = log {
        w.flush().map_err(io_err(path))?;
    }
    if !metrics.is_empty() {
        emit_report(&[(cfg.algorithm.clone(), metrics.clone())], out_dir)?;
    }
    Ok(metrics)
}

/// Trains `cfg` once per algorithm on shared seeds and charts them together.
pub fn run_compare(
    cfg: &RunConfig,
    algorithms: &[Algorithm],
    out_dir: &Path,
) -> Result<Vec<(String, Vec<StepMetrics>)>> {
    let base = cfg.train_config()?;
    let configs: Vec<_> = algorithms
        .iter()
        .map(|&algorithm| sspo_core::TrainConfig {
            algorithm,
            ..base.clone()
        })
        .collect();
    write_config(cfg, out_dir)?;
    let series = compare_run(&configs)?.series;
    if cfg.steps > 0 {
        emit_report(&series, out_dir)?;
    }
    Ok(series)
}
