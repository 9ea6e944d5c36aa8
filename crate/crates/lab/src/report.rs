//! Metrics CSV plus entropy, reward and clip-fraction charts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use sspo_core::StepMetrics;

use crate::error::{io_err, LabError, Result};
use crate::metrics::write_metrics;
use crate::svg::Chart;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHART_FILES: [&str; 3] = ["entropy.svg", "reward.svg", "clipfrac.svg"];

fn curve(steps: &[StepMetrics], f: impl Fn(&StepMetrics) -> f64) -> Vec<(f64, f64)> {
    steps.iter().map(|m| (m.step as f64, f(m))).collect()
}

/// Writes `metrics.csv`, `entropy.svg`, `reward.svg` and `clipfrac.svg`.
pub fn emit_report(series: &[(String, Vec<StepMetrics>)], out_dir: &Path) -> Result<()> {
    if series.iter().all(|(_, s)| s.is_empty()) {
        return Err(LabError::Config("no metrics to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(METRICS_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    write_metrics(BufWriter::new(file), series)?;

    type Panel = (&'static str, &'static str, fn(&StepMetrics) -> f64);
    let charts: [Panel; 3] = [
        ("Policy entropy", "mean token entropy (nats)", |m| m.mean_policy_entropy),
        ("Mean reward", "reward", |m| m.mean_reward),
        ("Clip fraction", "clipped tokens / tokens", |m| m.clip_fraction),
    ];
    for ((title, y_label, f), name) in charts.into_iter().zip(CHART_FILES) {
        let chart = Chart {
            title,
            x_label: "step",
            y_label,
            series: series.iter().map(|(n, s)| (n.clone(), curve(s, f))).collect(),
        };
        let path = out_dir.join(name);
        std::fs::write(&path, chart.render()).map_err(io_err(&path))?;
    }
    Ok(())
}
