use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sspo_core::Algorithm;
use sspo_lab::bounds::{bounds_table, grid, write_bounds};
use sspo_lab::gradcheck::{default_cases, run_gradcheck, DEFAULT_STEP, TOLERANCE};
use sspo_lab::run::{run_compare, run_train};
use sspo_lab::score::score_log;
use sspo_lab::{parse_rollout_log, LabError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "sspo", version, about = "Group-relative clipped policy-gradient lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set steps=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm on the toy task.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Also write every step's final-epoch batch to rollouts.jsonl.
        #[arg(long)]
        export_rollouts: bool,
    },
    /// Train several algorithms on shared seeds and chart them together.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "grpo,gspo,sspo,sspo_no_entropy_clip")]
        algorithms: Vec<String>,
    },
    /// Score a rollout log offline under every algorithm.
    Score {
        /// Line-delimited JSON rollout log.
        #[arg(long)]
        log: PathBuf,
        /// Clip and segmentation settings (the run's config.toml works).
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "runs/score")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value = "runs/gradcheck")]
        out: PathBuf,
    },
    /// Print adaptive clip bounds for a set of segment entropies.
    Bounds {
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// Entropies to tabulate; defaults to an even grid.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        entropy: Vec<f64>,
        #[arg(long, default_value_t = 11)]
        grid: usize,
        #[arg(long, default_value_t = 2.0)]
        max: f64,
        /// Also write bounds.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(|source| LabError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| LabError::Io { path, source })
}

fn print_last(series: &[(String, Vec<sspo_core::StepMetrics>)]) {
    println!("{:<22} {:>6} {:>8} {:>10} {:>8} {:>9}", "series", "step", "reward", "objective", "clip", "entropy");
    for (name, steps) in series {
        if let Some(m) = steps.last() {
            println!(
                "{:<22} {:>6} {:>8.4} {:>10.4} {:>8.4} {:>9.4}",
                name, m.step, m.mean_reward, m.objective, m.clip_fraction, m.mean_policy_entropy
            );
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            out,
            export_rollouts,
        } => {
            let cfg = config.load()?;
            let metrics = run_train(&cfg, &out, export_rollouts)?;
            print_last(&[(cfg.algorithm.clone(), metrics)]);
            println!("wrote {}", out.display());
        }
        Command::Compare {
            config,
            out,
            algorithms,
        } => {
            let cfg = config.load()?;
            let algorithms = algorithms
                .iter()
                .map(|a| a.parse::<Algorithm>())
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let series = run_compare(&cfg, &algorithms, &out)?;
            print_last(&series);
            println!("wrote {}", out.display());
        }
        Command::Score { log, config, out } => {
            let cfg = config.load()?;
            let parsed = parse_rollout_log(&log)?;
            for w in &parsed.warnings {
                eprintln!("warning: {w}");
            }
            let (groups, report) = score_log(parsed.groups, &cfg)?;
            report.write_scores(create(&out, "scores.csv")?)?;
            report.write_steps(create(&out, "step_objectives.csv")?)?;
            report.write_clip_table(create(&out, "clip_report.csv")?)?;
            println!("{} groups", groups.len());
            println!("{:<22} {:>8} {:>8} {:>10}", "algorithm", "clipped", "tokens", "fraction");
            for row in &report.clip_table {
                println!(
                    "{:<22} {:>8} {:>8} {:>10.4}",
                    row.label, row.clipped_tokens, row.total_tokens, row.clip_fraction
                );
            }
        }
        Command::Gradcheck {
            instances,
            seed,
            step,
            out,
        } => {
            let report = run_gradcheck(&default_cases(), instances, seed, step)?;
            report.write_csv(create(&out, "gradcheck.csv")?)?;
            println!(
                "{:<16} {:>9} {:>8} {:>6} {:>8} {:>12}",
                "case", "instances", "clipped", "ties", "params", "max_rel_err"
            );
            for s in &report.summaries {
                println!(
                    "{:<16} {:>9} {:>8} {:>6} {:>8} {:>12.3e}",
                    s.name, s.instances, s.clipped_instances, s.ties, s.params_checked, s.max_rel_error
                );
            }
            let worst = report.max_rel_error();
            println!("max relative error {worst:.3e} (tolerance {TOLERANCE:e})");
            return Ok(worst < TOLERANCE);
        }
        Command::Bounds {
            alpha,
            entropy,
            grid: n,
            max,
            out,
        } => {
            let hs = if entropy.is_empty() { grid(n, max) } else { entropy };
            let rows = bounds_table(&hs, alpha)?;
            println!("{:>8} {:>8} {:>8}", "H", "low", "high");
            for r in &rows {
                println!("{:>8.4} {:>8.4} {:>8.4}", r.entropy, r.low, r.high);
            }
            if let Some(dir) = out {
                write_bounds(create(&dir, "bounds.csv")?, &rows)?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
