//! The train and hedge stages and the files they write.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, GreeksMode, HedgePlan};
use crate::error::{Error, Result};
use crate::hedging::{run_hedge, ClosedFormGreeks, GreekSource, InstrumentSpec};
use crate::market::{simulate_paths, TimeGrid};
use crate::risk::{kde, pnl, report_for, write_kde_csv, write_report_csv, ReportRow};
use crate::rng;
use crate::solver::{portfolio_hash, train, SolverArtifact, TrainConfig};

/// Stream tag separating evaluation paths from training randomness.
const EVALUATION_STREAM: u64 = 0x6576_616c;
/// Stream tag of the instrument solvers' training seeds.
const INSTRUMENT_STREAM: u64 = 0x696e_7374;

/// File names under an experiment output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn artifact(&self) -> PathBuf {
        self.root.join("artifact")
    }

    pub fn instrument(&self, name: &str) -> PathBuf {
        self.root.join("instruments").join(name)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn kde(&self, label: &str, n: usize) -> PathBuf {
        self.root.join("kde").join(format!("{label}_N{n}.csv"))
    }

    pub fn ledger(&self, label: &str, n: usize) -> PathBuf {
        self.root.join("ledgers").join(format!("{label}_N{n}.csv"))
    }
}

/// Seed of the evaluation paths for an experiment seed.
pub fn evaluation_seed(seed: u64) -> u64 {
    rng::mix(&[seed, EVALUATION_STREAM])
}

/// Outcome of [`train_stage`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Content hash of the main artifact; `None` in closed-form mode.
    pub content_hash: Option<String>,
    /// `(name, content hash)` per instrument solver.
    pub instruments: Vec<(String, String)>,
    /// Time-zero model prices of the main portfolio.
    pub initial_prices: Vec<f64>,
}

fn write_config(cfg: &ExperimentConfig, layout: &OutputLayout) -> Result<()> {
    fs::create_dir_all(layout.root())?;
    fs::write(layout.config(), cfg.to_json()?)?;
    Ok(())
}

/// Trains the instrument solvers and, in solver mode, the portfolio solver,
/// saving them under `out`.
pub fn train_stage(cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let layout = OutputLayout::new(out);
    write_config(cfg, &layout)?;
    let mut instruments = Vec::new();
    for (k, s) in cfg.instrument_solvers.iter().enumerate() {
        let train_cfg = TrainConfig { seed: rng::mix(&[cfg.seed, INSTRUMENT_STREAM, k as u64]), ..cfg.train.clone() };
        let art = train(&s.portfolio, TimeGrid::new(s.portfolio.maturity, s.grid_steps)?, &train_cfg)?;
        instruments.push((s.name.clone(), art.save(&layout.instrument(&s.name))?));
    }
    let grid = cfg.grid()?;
    match cfg.greeks {
        GreeksMode::ClosedForm => {
            let src = ClosedFormGreeks::new(cfg.portfolio.clone(), grid)?;
            Ok(TrainSummary { content_hash: None, instruments, initial_prices: src.initial_prices()? })
        }
        GreeksMode::Solver => {
            let art = train(&cfg.portfolio, grid, &cfg.train_config())?;
            let hash = art.save(&layout.artifact())?;
            Ok(TrainSummary { content_hash: Some(hash), instruments, initial_prices: art.initial_prices()? })
        }
    }
}

/// Loads the trained artifact of `cfg` from `dir` and checks it prices the configured portfolio.
pub fn load_compatible(cfg: &ExperimentConfig, dir: &Path) -> Result<SolverArtifact> {
    let art = SolverArtifact::load(dir)?;
    if portfolio_hash(art.portfolio()) != portfolio_hash(&cfg.portfolio) {
        return Err(Error::Incompatible(format!("artifact in {} was trained on a different portfolio", dir.display())));
    }
    if *art.grid() != cfg.grid()? {
        return Err(Error::Incompatible(format!(
            "artifact grid has {} steps, the config asks for {}",
            art.grid().n_steps(),
            cfg.grid_steps
        )));
    }
    Ok(art)
}

/// Instrument specs with solver artifact paths anchored at `root`.
fn anchored(plan: &HedgePlan, root: &Path) -> HedgePlan {
    let instruments = plan
        .instruments
        .iter()
        .map(|i| match i {
            InstrumentSpec::SolverPriced { artifact, maturity } => {
                InstrumentSpec::SolverPriced { artifact: root.join(artifact), maturity: *maturity }
            }
            other => other.clone(),
        })
        .collect();
    HedgePlan { instruments, ..plan.clone() }
}

/// Hedges every plan at every frequency against `source`, writing the report,
/// density and optional ledger files under `out`. Returns the report rows.
pub fn hedge_with(cfg: &ExperimentConfig, source: &dyn GreekSource, out: &Path) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let layout = OutputLayout::new(out);
    fs::create_dir_all(layout.root().join("kde"))?;
    if cfg.evaluation.record_ledgers {
        fs::create_dir_all(layout.root().join("ledgers"))?;
    }
    let model = source.model();
    let grid = source.grid();
    let paths = simulate_paths(model, grid, cfg.evaluation.n_paths, evaluation_seed(cfg.seed));
    let mut rows = Vec::new();
    for plan in &cfg.hedges {
        let plan = anchored(plan, layout.root());
        let label = plan.label();
        let instruments = plan.at(plan.rebalances[0]).resolve_instruments(model, grid.horizon())?;
        for &n in &plan.rebalances {
            let ledger = run_hedge(&plan.at(n), source, &instruments, &paths, cfg.evaluation.record_ledgers)?;
            if cfg.evaluation.record_ledgers {
                ledger.write_csv(BufWriter::new(File::create(layout.ledger(&label, n))?))?;
            }
            let sample = pnl(&ledger)?;
            let report = report_for(&sample, &cfg.evaluation.levels)?;
            match kde(&sample.values, cfg.evaluation.kde_points) {
                Ok(curve) => write_kde_csv(&curve, BufWriter::new(File::create(layout.kde(&label, n))?))?,
                Err(Error::DegenerateSample) => {}
                Err(e) => return Err(e),
            }
            rows.push(ReportRow { strategy: label.clone(), n_rebalance: n, report });
        }
    }
    write_report_csv(&rows, cfg.seed, &cfg.name, BufWriter::new(File::create(layout.report())?))?;
    Ok(rows)
}

/// Hedge stage: closed-form Greeks or the artifact saved by [`train_stage`].
pub fn hedge_stage(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ReportRow>> {
    hedge_stage_from(cfg, out, &OutputLayout::new(out).artifact())
}

/// Hedge stage reading the portfolio artifact from `artifact` instead of `<out>/artifact`.
pub fn hedge_stage_from(cfg: &ExperimentConfig, out: &Path, artifact: &Path) -> Result<Vec<ReportRow>> {
    match cfg.greeks {
        GreeksMode::ClosedForm => hedge_with(cfg, &ClosedFormGreeks::new(cfg.portfolio.clone(), cfg.grid()?)?, out),
        GreeksMode::Solver => hedge_with(cfg, &load_compatible(cfg, artifact)?, out),
    }
}
