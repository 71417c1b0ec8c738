//! Experiment configuration files.
//!
//! ```toml
//! scenario = "car"            # tiger | car | pendulum | chain
//! study = "benchmark"         # benchmark | variance | budget-sweep
//! solvers = ["mlpp", "baseline@3"]
//! budget = "1000"             # episodes per step, "50ms" wall-clock, or "4000sim" cost
//! trials = 20
//! seed = 7
//! out = "results.csv"
//!
//! [car]                       # optional scenario overrides
//! max_level = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::problems::{CarConfig, ChainConfig, PendulumConfig, TigerConfig};
use crate::solver::{Algorithm, Budget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Tiger,
    Car,
    Pendulum,
    Chain,
}

impl std::str::FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tiger" => Ok(Self::Tiger),
            "car" | "car-navigation" => Ok(Self::Car),
            "pendulum" => Ok(Self::Pendulum),
            "chain" => Ok(Self::Chain),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Tiger => "tiger",
            Self::Car => "car",
            Self::Pendulum => "pendulum",
            Self::Chain => "chain",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Benchmark,
    Variance,
    BudgetSweep,
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Benchmark => "benchmark",
            Self::Variance => "variance",
            Self::BudgetSweep => "budget-sweep",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceConfig {
    /// Independent planning runs `R`.
    pub runs: usize,
    /// Episodes (and correlated pairs) per level and step `M`.
    pub samples: usize,
    /// Steps measured per run.
    pub steps: usize,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            runs: 5,
            samples: 2000,
            steps: 10,
        }
    }
}

/// Raw file contents; every field is optional so flags can fill gaps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub study: Option<StudyKind>,
    pub solver: Option<String>,
    pub solvers: Option<Vec<String>>,
    pub budget: Option<String>,
    pub budgets: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub exploration: Option<f64>,
    pub level_exploration: Option<f64>,
    pub particles: Option<usize>,
    pub pairs_per_episode: Option<usize>,
    /// Worker threads for independent trials; 0 uses every core.
    pub threads: Option<usize>,
    /// Fill the per-step wall-clock column (makes output machine-dependent).
    pub record_timing: Option<bool>,
    pub tree_dump: Option<PathBuf>,
    pub tree_dump_depth: Option<usize>,
    pub variance: Option<VarianceConfig>,
    pub tiger: Option<TigerConfig>,
    pub car: Option<CarConfig>,
    pub pendulum: Option<PendulumConfig>,
    pub chain: Option<ChainConfig>,
}

/// Command-line overrides applied on top of a file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub study: Option<StudyKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub budget: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Tiger(TigerConfig),
    Car(CarConfig),
    Pendulum(PendulumConfig),
    Chain(ChainConfig),
}

impl Scenario {
    pub fn name(&self) -> ScenarioName {
        match self {
            Self::Tiger(_) => ScenarioName::Tiger,
            Self::Car(_) => ScenarioName::Car,
            Self::Pendulum(_) => ScenarioName::Pendulum,
            Self::Chain(_) => ScenarioName::Chain,
        }
    }

    /// Exploration constant scaled to the scenario's reward range.
    pub fn default_exploration(&self) -> f64 {
        match self {
            Self::Tiger(_) => 100.0,
            Self::Car(_) => 300.0,
            Self::Pendulum(_) => 500.0,
            Self::Chain(_) => 10.0,
        }
    }

    pub fn max_level(&self) -> usize {
        match self {
            Self::Tiger(c) => c.max_level,
            Self::Car(c) => c.max_level,
            Self::Pendulum(c) => c.max_level,
            Self::Chain(c) => c.advance.len().saturating_sub(1),
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub study: StudyKind,
    pub solvers: Vec<Algorithm>,
    pub budget: Budget,
    pub budgets: Vec<Budget>,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub exploration: f64,
    pub level_exploration: f64,
    pub particles: usize,
    pub pairs_per_episode: usize,
    pub threads: usize,
    pub record_timing: bool,
    pub tree_dump: Option<PathBuf>,
    pub tree_dump_depth: usize,
    pub variance: VarianceConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self, HarnessError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_raw(raw, overrides)
    }

    pub fn from_raw(raw: RawConfig, overrides: &Overrides) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Config(m);
        let name: ScenarioName = raw
            .scenario
            .as_deref()
            .ok_or_else(|| bad("missing `scenario`".into()))?
            .parse()
            .map_err(bad)?;
        let scenario = match name {
            ScenarioName::Tiger => Scenario::Tiger(raw.tiger.clone().unwrap_or_default()),
            ScenarioName::Car => Scenario::Car(raw.car.clone().unwrap_or_default()),
            ScenarioName::Pendulum => Scenario::Pendulum(raw.pendulum.clone().unwrap_or_default()),
            ScenarioName::Chain => Scenario::Chain(raw.chain.clone().unwrap_or_default()),
        };
        let other_sections = [
            ("tiger", raw.tiger.is_some(), ScenarioName::Tiger),
            ("car", raw.car.is_some(), ScenarioName::Car),
            ("pendulum", raw.pendulum.is_some(), ScenarioName::Pendulum),
            ("chain", raw.chain.is_some(), ScenarioName::Chain),
        ];
        for (section, present, owner) in other_sections {
            if present && owner != name {
                return Err(bad(format!(
                    "section [{section}] does not apply to scenario `{name}`"
                )));
            }
        }

        let solver_names = match (raw.solver, raw.solvers) {
            (Some(_), Some(_)) => {
                return Err(bad("give either `solver` or `solvers`, not both".into()))
            }
            (Some(s), None) => vec![s],
            (None, Some(v)) => v,
            (None, None) => vec!["mlpp".into()],
        };
        if solver_names.is_empty() {
            return Err(bad("`solvers` is empty".into()));
        }
        let solvers = solver_names
            .iter()
            .map(|s| s.parse::<Algorithm>().map_err(bad))
            .collect::<Result<Vec<_>, _>>()?;
        let max_level = scenario.max_level();
        for s in &solvers {
            if let Algorithm::SingleLevel { level } = s {
                if *level > max_level {
                    return Err(bad(format!(
                        "solver {s} plans at level {level}, but the scenario's finest level is {max_level}"
                    )));
                }
            }
        }

        let parse_budget = |s: &str| s.parse::<Budget>().map_err(bad);
        let budget = match overrides.budget.as_deref().or(raw.budget.as_deref()) {
            Some(b) => parse_budget(b)?,
            None => Budget::Episodes(1000),
        };
        if !budget.is_positive() {
            return Err(bad("budget must be positive".into()));
        }
        let study = overrides
            .study
            .or(raw.study)
            .unwrap_or(StudyKind::Benchmark);
        let budgets = match (&raw.budgets, study) {
            (Some(list), _) => list
                .iter()
                .map(|b| parse_budget(b))
                .collect::<Result<Vec<_>, _>>()?,
            (None, _) => Vec::new(),
        };
        if study == StudyKind::BudgetSweep && budgets.is_empty() {
            return Err(bad("a budget sweep needs a non-empty `budgets` list".into()));
        }
        if budgets.iter().any(|b| !b.is_positive()) {
            return Err(bad("every budget must be positive".into()));
        }

        let trials = overrides.trials.or(raw.trials).unwrap_or(1);
        if trials == 0 {
            return Err(bad("trial count must be at least 1".into()));
        }
        let variance = raw.variance.unwrap_or_default();
        if study == StudyKind::Variance {
            if max_level == 0 {
                return Err(bad(
                    "the variance study needs a scenario with at least two levels".into(),
                ));
            }
            if variance.runs == 0 || variance.samples == 0 || variance.steps == 0 {
                return Err(bad(
                    "variance runs, samples and steps must be positive".into()
                ));
            }
        }
        let exploration = raw
            .exploration
            .unwrap_or_else(|| scenario.default_exploration());
        let level_exploration = raw.level_exploration.unwrap_or(exploration);
        if !(exploration >= 0.0) || !(level_exploration >= 0.0) {
            return Err(bad("exploration constants must be non-negative".into()));
        }
        let particles = raw.particles.unwrap_or(2000);
        if particles == 0 {
            return Err(bad("particle count must be positive".into()));
        }
        let config = Self {
            scenario,
            study,
            solvers,
            budget,
            budgets,
            trials,
            seed: overrides.seed.or(raw.seed).unwrap_or(0),
            out: overrides.out.clone().or(raw.out),
            exploration,
            level_exploration,
            particles,
            pairs_per_episode: raw.pairs_per_episode.unwrap_or(1),
            threads: raw.threads.unwrap_or(0),
            record_timing: raw.record_timing.unwrap_or(false),
            tree_dump: raw.tree_dump,
            tree_dump_depth: raw.tree_dump_depth.unwrap_or(2),
            variance,
        };
        // Building the model runs the scenario's own parameter checks.
        super::check_model(&config.scenario)?;
        Ok(config)
    }
}
