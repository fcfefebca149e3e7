//! Versioned JSON experiment documents.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::contracts::PortfolioSpec;
use crate::error::{Error, Result};
use crate::hedging::{ClosedFormGreeks, HedgeConfig, Horizon, IndexSet, InstrumentSpec, LsqrOptions, Strategy};
use crate::market::TimeGrid;
use crate::risk::MIN_TAIL_SAMPLE;
use crate::solver::TrainConfig;

/// Schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Where the hedging engine reads prices and Greeks from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreeksMode {
    /// A trained artifact in `<out>/artifact`.
    #[default]
    Solver,
    /// Analytic Black–Scholes Greeks; no training needed.
    ClosedForm,
}

/// A single-contract solver trained next to the main artifact, used as a
/// hedging instrument through `solver_priced` entries pointing at
/// `instruments/<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSolver {
    pub name: String,
    pub portfolio: PortfolioSpec,
    pub grid_steps: usize,
}

/// One strategy evaluated at several rebalancing frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgePlan {
    /// Report label; defaults to the strategy name.
    #[serde(default)]
    pub label: Option<String>,
    pub strategy: Strategy,
    pub rebalances: Vec<usize>,
    #[serde(default)]
    pub index_set: IndexSet,
    #[serde(default)]
    pub instruments: Vec<InstrumentSpec>,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub lsqr: LsqrOptions,
}

impl HedgePlan {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.strategy.as_str().to_string())
    }

    /// Engine configuration for `n` rebalancing dates.
    pub fn at(&self, n: usize) -> HedgeConfig {
        HedgeConfig {
            strategy: self.strategy,
            rebalances: n,
            index_set: self.index_set.clone(),
            instruments: self.instruments.clone(),
            horizon: self.horizon,
            lsqr: self.lsqr,
        }
    }
}

/// Out-of-sample evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaluation {
    pub n_paths: usize,
    pub levels: Vec<f64>,
    pub kde_points: usize,
    /// Dump per-path ledgers as CSV.
    #[serde(default)]
    pub record_ledgers: bool,
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation { n_paths: 1 << 14, levels: vec![0.95, 0.99], kde_points: 512, record_ledgers: false }
    }
}

/// Full description of a train → hedge → report run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    /// Single source of randomness; overrides `train.seed`.
    pub seed: u64,
    pub portfolio: PortfolioSpec,
    /// Solver grid size `N'`.
    pub grid_steps: usize,
    pub train: TrainConfig,
    #[serde(default)]
    pub greeks: GreeksMode,
    #[serde(default)]
    pub instrument_solvers: Vec<InstrumentSolver>,
    #[serde(default)]
    pub hedges: Vec<HedgePlan>,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical pretty-printed JSON form.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.portfolio.maturity, self.grid_steps)
    }

    /// Training settings with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return config_err(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.name.is_empty() {
            return config_err("experiment name is empty");
        }
        let grid = self.grid()?;
        let model = self.portfolio.validate(&grid)?;
        self.train.validate()?;
        if self.greeks == GreeksMode::ClosedForm {
            ClosedFormGreeks::new(self.portfolio.clone(), grid)?;
        }
        let mut names = HashSet::new();
        for s in &self.instrument_solvers {
            let safe = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !safe || !names.insert(s.name.as_str()) {
                return config_err(format!("instrument solver name {:?} is empty, repeated or not a plain file name", s.name));
            }
            if s.portfolio.j() != 1 {
                return config_err(format!("instrument solver {} must price exactly one contract", s.name));
            }
            if s.portfolio.model != self.portfolio.model {
                return config_err(format!("instrument solver {} uses a different model", s.name));
            }
            s.portfolio.validate(&TimeGrid::new(s.portfolio.maturity, s.grid_steps)?)?;
        }
        let mut labels = HashSet::new();
        for plan in &self.hedges {
            let label = plan.label();
            let safe = !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !safe || !labels.insert(label.clone()) {
                return config_err(format!("hedge label {label:?} is empty, repeated or contains separators"));
            }
            if plan.rebalances.is_empty() {
                return config_err(format!("hedge {label} lists no rebalancing frequencies"));
            }
            for &n in &plan.rebalances {
                grid.rebalance_indices(n)?;
            }
            plan.at(plan.rebalances[0]).rows(model.d(), model.m())?;
            if plan.strategy.uses_instruments() {
                for inst in &plan.instruments {
                    if let InstrumentSpec::SolverPriced { artifact, .. } = inst {
                        if artifact.is_absolute() || artifact.components().count() == 0 {
                            return config_err(format!("hedge {label}: solver-priced instruments use paths relative to the output directory"));
                        }
                    }
                }
            }
        }
        let ev = &self.evaluation;
        if ev.n_paths < MIN_TAIL_SAMPLE {
            return config_err(format!("evaluation needs at least {MIN_TAIL_SAMPLE} paths"));
        }
        for need in [0.95, 0.99] {
            if !ev.levels.iter().any(|l| (l - need).abs() < 1e-12) {
                return config_err(format!("evaluation levels must include {need}"));
            }
        }
        if ev.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return config_err("evaluation levels must lie in (0, 1)");
        }
        if ev.kde_points < 2 {
            return config_err("kde_points must be at least 2");
        }
        Ok(())
    }
}
