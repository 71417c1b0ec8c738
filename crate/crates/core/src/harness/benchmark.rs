use rayon::prelude::*;
use serde::Serialize;

use super::{
    algorithm_label, fmt_finite, fmt_opt, pool, solver_config, trial_seed, with_model,
    write_output, ExperimentConfig, HarnessError,
};
use crate::belief::ParticleBelief;
use crate::solver::{rng_streams, run_trial, Algorithm, Budget, Outcome, Planner, TerminalKind};
use crate::stats::{ci95_half_width, mean_and_se};

pub const BENCHMARK_HEADER: [&str; 10] = [
    "trial",
    "seed",
    "solver",
    "budget",
    "discounted_return",
    "steps",
    "outcome",
    "wall_ms_per_step",
    "episodes_per_level",
    "simulation_cost",
];

/// One benchmark trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub solver: Algorithm,
    pub budget: Budget,
    pub discounted_return: f64,
    pub steps: usize,
    pub outcome: Outcome,
    pub wall_ms_per_step: Option<f64>,
    /// Episodes sampled per level over the whole trial.
    pub episodes: Vec<u64>,
    pub cost: u64,
}

impl TrialRecord {
    fn csv_row(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.seed.to_string(),
            algorithm_label(self.solver),
            self.budget.to_string(),
            fmt_finite(self.discounted_return),
            self.steps.to_string(),
            self.outcome.to_string(),
            fmt_opt(self.wall_ms_per_step),
            self.episodes
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            self.cost.to_string(),
        ]
    }
}

/// Mean discounted return of one solver with its 95% confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub solver: Algorithm,
    pub budget: Budget,
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci95: f64,
}

impl Summary {
    pub fn of(solver: Algorithm, budget: Budget, records: &[TrialRecord]) -> Self {
        let returns: Vec<f64> = records.iter().map(|r| r.discounted_return).collect();
        let (mean, std_error) = mean_and_se(&returns);
        Self {
            solver,
            budget,
            trials: returns.len(),
            mean,
            std_error,
            ci95: ci95_half_width(std_error, returns.len()),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<12} budget {:<8} mean return {:.3} +/- {:.3} (95% CI, {} trials)",
            self.solver.to_string(),
            self.budget.to_string(),
            self.mean,
            self.ci95,
            self.trials
        )
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<Summary>,
    pub csv: Vec<u8>,
}

/// Runs `cfg.trials` trials of every configured solver and writes one row per trial.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport, HarnessError> {
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for &solver in &cfg.solvers {
        let rows = trial_records(cfg, solver, cfg.budget)?;
        summaries.push(Summary::of(solver, cfg.budget, &rows));
        records.extend(rows);
    }
    if let Some(path) = &cfg.tree_dump {
        let json = with_model!(&cfg.scenario, model => initial_tree_json(&model, cfg)?);
        write_output(Some(path), json.as_bytes())?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(BENCHMARK_HEADER)?;
    for r in &records {
        w.write_record(r.csv_row())?;
    }
    let csv = w.into_inner().map_err(|e| e.into_error())?;
    write_output(cfg.out.as_deref(), &csv)?;
    Ok(BenchmarkReport {
        records,
        summaries,
        csv,
    })
}

pub(crate) fn trial_records(
    cfg: &ExperimentConfig,
    solver: Algorithm,
    budget: Budget,
) -> Result<Vec<TrialRecord>, HarnessError> {
    with_model!(&cfg.scenario, model => model_trials(&model, cfg, solver, budget))
}

fn model_trials<M: TerminalKind<Scalar = f64>>(
    model: &M,
    cfg: &ExperimentConfig,
    solver: Algorithm,
    budget: Budget,
) -> Result<Vec<TrialRecord>, HarnessError> {
    let solver_cfg = solver_config(cfg, budget);
    let run = |trial: usize| -> Result<TrialRecord, HarnessError> {
        let seed = trial_seed(cfg.seed, trial as u64);
        let result = run_trial(model, &solver_cfg, solver, seed)?;
        let wall = (cfg.record_timing && result.steps > 0)
            .then(|| result.stats.elapsed.as_secs_f64() * 1000.0 / result.steps as f64);
        Ok(TrialRecord {
            trial,
            seed,
            solver,
            budget,
            discounted_return: result.discounted_return,
            steps: result.steps,
            outcome: result.outcome,
            wall_ms_per_step: wall,
            episodes: result.stats.episodes.clone(),
            cost: result.stats.cost,
        })
    };
    pool(cfg.threads)?.install(|| (0..cfg.trials).into_par_iter().map(run).collect())
}

/// Search tree after the first planning step of trial 0 with the first solver.
fn initial_tree_json<M: TerminalKind<Scalar = f64>>(
    model: &M,
    cfg: &ExperimentConfig,
) -> Result<String, HarnessError> {
    let seed = trial_seed(cfg.seed, 0);
    let [plan_rng, pair_rng, mut world] = rng_streams(seed);
    let mut planner = Planner::with_rngs(
        model,
        solver_config(cfg, cfg.budget),
        cfg.solvers[0],
        plan_rng,
        pair_rng,
    )?;
    let _true_state = model.initial_state(&mut world);
    let belief = ParticleBelief::from_sampler(cfg.particles, || model.initial_state(&mut world))
        .map_err(crate::solver::SolverError::from)?;
    planner.plan(&belief)?;
    Ok(serde_json::to_string_pretty(
        &planner.tree().export(cfg.tree_dump_depth),
    )?)
}
