//! `mlpp`: runs benchmark, variance and budget-sweep experiments from a config file.
//!
//! Exit codes: 0 on success, 2 on a configuration error (including bad
//! flags), 1 on any other failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlpp::harness::{
    run_benchmark, run_budget_sweep, run_variance_study, ExperimentConfig, HarnessError, Overrides,
    StudyKind,
};

#[derive(Parser)]
#[command(
    name = "mlpp",
    version,
    about = "Multilevel Monte-Carlo POMDP planning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured solver for `trials` trials; one CSV row per trial.
    Bench(Common),
    /// Measure per-level return variances after each planning step.
    Variance(Common),
    /// Benchmark every solver at every budget in `budgets`; one row per pair.
    Sweep(Common),
    /// Parse and check a config file without running anything.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; overrides the file. Without one the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trial count; overrides the file.
    #[arg(long)]
    trials: Option<usize>,
    /// Per-step budget: episodes ("1000"), wall-clock ("50ms") or simulation cost ("4000sim").
    #[arg(long)]
    budget: Option<String>,
}

impl Common {
    fn load(&self, study: Option<StudyKind>) -> Result<ExperimentConfig, HarnessError> {
        let overrides = Overrides {
            study,
            seed: self.seed,
            out: self.out.clone(),
            trials: self.trials,
            budget: self.budget.clone(),
        };
        ExperimentConfig::from_path(&self.config, &overrides)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Bench(c) => {
            let cfg = c.load(Some(StudyKind::Benchmark))?;
            let report = run_benchmark(&cfg)?;
            emit(&cfg, &report.csv)?;
            for s in &report.summaries {
                report_line(&cfg, &s.to_string());
            }
        }
        Command::Variance(c) => {
            let cfg = c.load(Some(StudyKind::Variance))?;
            let report = run_variance_study(&cfg)?;
            emit(&cfg, &report.csv)?;
            for m in &report.means {
                let fmt =
                    |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
                report_line(
                    &cfg,
                    &format!(
                        "level {}  var(Q_l) {}  var(Q_l - Q_l-1) {}",
                        m.level,
                        fmt(m.var_q),
                        fmt(m.var_diff)
                    ),
                );
            }
        }
        Command::Sweep(c) => {
            let cfg = c.load(Some(StudyKind::BudgetSweep))?;
            let report = run_budget_sweep(&cfg)?;
            emit(&cfg, &report.csv)?;
            for r in &report.rows {
                report_line(&cfg, &r.summary.to_string());
            }
        }
        Command::ValidateConfig(c) => {
            let cfg = c.load(None)?;
            let solvers: Vec<String> = cfg.solvers.iter().map(|s| s.to_string()).collect();
            println!(
                "ok: scenario {}, study {}, solvers [{}], budget {}, {} trial(s), seed {}",
                cfg.scenario.name(),
                cfg.study,
                solvers.join(", "),
                cfg.budget,
                cfg.trials,
                cfg.seed
            );
        }
    }
    Ok(())
}

/// Without an output path the CSV is the program's stdout.
fn emit(cfg: &ExperimentConfig, csv: &[u8]) -> Result<(), HarnessError> {
    if cfg.out.is_none() {
        std::io::stdout().lock().write_all(csv)?;
    }
    Ok(())
}

/// Human-readable summaries go to stderr when stdout carries the CSV.
fn report_line(cfg: &ExperimentConfig, line: &str) {
    if cfg.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}
