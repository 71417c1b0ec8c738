use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    algorithm_label, fmt_opt, pool, solver_config, trial_seed, with_model, write_output,
    ExperimentConfig, HarnessError, VarianceConfig,
};
use crate::belief::ParticleBelief;
use crate::model::PomdpModel;
use crate::scalar::Scalar;
use crate::solver::{
    policy_episode, replay, rng_streams, run_from_with, Algorithm, PlanStats, Planner,
    SolverConfig, SolverError, TerminalKind,
};
use crate::stats::RunningStats;

pub const VARIANCE_HEADER: [&str; 8] = [
    "record", "solver", "run", "step", "level", "var_q", "var_diff", "seed",
];

/// Variances measured at one level, after one planning step, or averaged
/// over all measured steps (`run` and `step` empty).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceRow {
    pub run: Option<usize>,
    pub step: Option<usize>,
    pub level: usize,
    /// `Var[Q_l]`: variance of level-`l` returns under the frozen policy.
    pub var_q: Option<f64>,
    /// `Var[Q_l - Q_(l-1)]` over correlated pairs; `None` at level 0.
    pub var_diff: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub solver: Algorithm,
    /// Per-step rows ordered by run, step, level.
    pub steps: Vec<VarianceRow>,
    /// One averaged row per level.
    pub means: Vec<VarianceRow>,
    pub csv: Vec<u8>,
}

impl VarianceReport {
    /// Per-step rows grouped by `(run, step)`, each group ordered by level.
    pub fn by_step(&self) -> Vec<&[VarianceRow]> {
        self.steps
            .chunk_by(|a, b| a.run == b.run && a.step == b.step)
            .collect()
    }
}

/// After every planning step of `R` runs, freezes the tree policy and
/// estimates per-level return variances from `M` episodes per level and `M`
/// correlated pairs per level.
pub fn run_variance_study(cfg: &ExperimentConfig) -> Result<VarianceReport, HarnessError> {
    let solver = cfg.solvers[0];
    let solver_cfg = solver_config(cfg, cfg.budget);
    let steps = with_model!(&cfg.scenario, model => {
        if model.max_level() == 0 {
            return Err(HarnessError::Config("the variance study needs at least two levels".into()));
        }
        measure_variances(&model, &solver_cfg, solver, &cfg.variance, cfg.seed, cfg.threads)?
    });
    if cfg.variance.samples < 2 {
        log::warn!(
            "variance undefined with fewer than 2 samples per level; emitting missing values"
        );
    }
    let means = level_means(&steps, cfg.seed);
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(VARIANCE_HEADER)?;
    let label = algorithm_label(solver);
    for (kind, rows) in [("step", &steps), ("mean", &means)] {
        for r in rows {
            w.write_record([
                kind.to_string(),
                label.clone(),
                r.run.map(|x| x.to_string()).unwrap_or_default(),
                r.step.map(|x| x.to_string()).unwrap_or_default(),
                r.level.to_string(),
                fmt_opt(r.var_q),
                fmt_opt(r.var_diff),
                r.seed.to_string(),
            ])?;
        }
    }
    let csv = w.into_inner().map_err(|e| e.into_error())?;
    write_output(cfg.out.as_deref(), &csv)?;
    Ok(VarianceReport {
        solver,
        steps,
        means,
        csv,
    })
}

/// Per-step variance rows for `runs` independent planning runs of `model`.
pub fn measure_variances<M: TerminalKind>(
    model: &M,
    solver_cfg: &SolverConfig<M::Scalar>,
    solver: Algorithm,
    study: &VarianceConfig,
    seed: u64,
    threads: usize,
) -> Result<Vec<VarianceRow>, HarnessError> {
    let runs: Vec<Result<Vec<VarianceRow>, HarnessError>> = pool(threads)?.install(|| {
        (0..study.runs)
            .into_par_iter()
            .map(|run| {
                measure_run(
                    model,
                    solver_cfg,
                    solver,
                    study,
                    run,
                    trial_seed(seed, run as u64),
                )
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in runs {
        rows.extend(r?);
    }
    Ok(rows)
}

fn measure_run<M: TerminalKind>(
    model: &M,
    solver_cfg: &SolverConfig<M::Scalar>,
    solver: Algorithm,
    study: &VarianceConfig,
    run: usize,
    seed: u64,
) -> Result<Vec<VarianceRow>, HarnessError> {
    let [plan_rng, pair_rng, mut world] = rng_streams(seed);
    // A separate stream keeps the measurement from perturbing the run itself.
    let mut probe = ChaCha8Rng::seed_from_u64(seed);
    probe.set_stream(3);
    let mut planner = Planner::with_rngs(model, solver_cfg.clone(), solver, plan_rng, pair_rng)?;
    let mut state = model.initial_state(&mut world);
    let mut belief =
        ParticleBelief::from_sampler(solver_cfg.particles, || model.initial_state(&mut world))
            .map_err(SolverError::from)?;
    let mut rows = Vec::new();
    run_from_with(
        model,
        &mut planner,
        &mut belief,
        &mut state,
        &mut world,
        |view| {
            let depth = model.max_steps() - view.step;
            for (level, var_q, var_diff) in measure_step(
                model,
                view.planner,
                view.belief,
                depth,
                study.samples,
                &mut probe,
            ) {
                rows.push(VarianceRow {
                    run: Some(run),
                    step: Some(view.step),
                    level,
                    var_q,
                    var_diff,
                    seed,
                });
            }
            if view.step + 1 >= study.steps {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )?;
    Ok(rows)
}

type LevelVariances = (usize, Option<f64>, Option<f64>);

fn measure_step<M: PomdpModel>(
    model: &M,
    planner: &Planner<'_, M>,
    belief: &ParticleBelief<M::State, M::Scalar>,
    depth: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<LevelVariances> {
    let gamma = model.discount();
    let tree = planner.tree();
    let mut stats = PlanStats::new(model.num_levels());
    let mut out = Vec::new();
    for level in 0..model.num_levels() {
        let mut q = RunningStats::<f64>::new();
        let mut diff = RunningStats::<f64>::new();
        for _ in 0..samples {
            let s = belief
                .sample_state(rng)
                .expect("belief is never empty")
                .clone();
            let e = policy_episode(model, tree, s, level, depth, rng);
            q.push(e.values(gamma)[0].as_f64());
        }
        if level > 0 {
            for _ in 0..samples {
                let s = belief
                    .sample_state(rng)
                    .expect("belief is never empty")
                    .clone();
                let fine = policy_episode(model, tree, s, level, depth, rng);
                let coarse = replay(model, &fine, level - 1, None, &mut stats);
                diff.push((fine.values(gamma)[0] - coarse.values(gamma)[0]).as_f64());
            }
        }
        out.push((
            level,
            q.variance(),
            if level > 0 { diff.variance() } else { None },
        ));
    }
    out
}

fn level_means(rows: &[VarianceRow], seed: u64) -> Vec<VarianceRow> {
    let levels = rows.iter().map(|r| r.level + 1).max().unwrap_or(0);
    (0..levels)
        .map(|level| {
            let at: Vec<&VarianceRow> = rows.iter().filter(|r| r.level == level).collect();
            let mean = |f: fn(&VarianceRow) -> Option<f64>| {
                let xs: Vec<f64> = at.iter().filter_map(|r| f(r)).collect();
                (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
            };
            VarianceRow {
                run: None,
                step: None,
                level,
                var_q: mean(|r| r.var_q),
                var_diff: mean(|r| r.var_diff),
                seed,
            }
        })
        .collect()
}
