use serde::Serialize;

use super::benchmark::{trial_records, Summary};
use super::{algorithm_label, fmt_finite, write_output, ExperimentConfig, HarnessError};
use crate::solver::{Algorithm, Budget};

pub const SWEEP_HEADER: [&str; 8] = [
    "solver",
    "budget",
    "trials",
    "mean_return",
    "std_error",
    "ci95_low",
    "ci95_high",
    "seed",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub solver: Algorithm,
    pub budget: Budget,
    pub summary: Summary,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub csv: Vec<u8>,
}

/// Benchmarks every solver at every budget; one aggregate row per pair.
pub fn run_budget_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    if cfg.budgets.is_empty() {
        return Err(HarnessError::Config(
            "budget sweep needs at least one budget".into(),
        ));
    }
    let mut rows = Vec::new();
    for &budget in &cfg.budgets {
        for &solver in &cfg.solvers {
            let records = trial_records(cfg, solver, budget)?;
            rows.push(SweepRow {
                solver,
                budget,
                summary: Summary::of(solver, budget, &records),
                seed: cfg.seed,
            });
        }
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in &rows {
        let s = &r.summary;
        w.write_record([
            algorithm_label(r.solver),
            r.budget.to_string(),
            s.trials.to_string(),
            fmt_finite(s.mean),
            fmt_finite(s.std_error),
            fmt_finite(s.mean - s.ci95),
            fmt_finite(s.mean + s.ci95),
            r.seed.to_string(),
        ])?;
    }
    let csv = w.into_inner().map_err(|e| e.into_error())?;
    write_output(cfg.out.as_deref(), &csv)?;
    Ok(SweepReport { rows, csv })
}
