//! Backward deep BSDE solvers for discretely reflected collections: the One
//! Step Malliavin scheme (price, `Z` and `Γ` networks) and the RDBDP baseline
//! (price and `Z` networks), plus the trained artifact that evaluates Greeks.

mod artifact;
pub mod losses;
mod train;

use serde::{Deserialize, Serialize};

use crate::nn::LrSchedule;

pub use artifact::{portfolio_hash, GreekBatch, SolverArtifact, StepLoss, StepNets, MANIFEST_FILE};
pub use train::{osm_train, rdbdp_train, train};

/// Regression scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Osm,
    Rdbdp,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Osm => "osm",
            Scheme::Rdbdp => "rdbdp",
        }
    }
}

/// Training budget and network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: Scheme,
    /// SGD iterations at the last time step `N'−1`.
    pub iters_last: usize,
    /// SGD iterations at every earlier time step.
    pub iters: usize,
    /// Fresh paths per SGD iteration.
    pub batch: usize,
    /// Learning rates at the last time step.
    pub schedule: LrSchedule,
    /// Learning rates at transferred (earlier) time steps.
    pub transfer_schedule: LrSchedule,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub batch_norm: bool,
    /// Implicitness weight of the price recursion.
    pub theta_y: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: Scheme::Osm,
            iters_last: 1 << 16,
            iters: 1 << 12,
            batch: 256,
            schedule: LrSchedule::default(),
            transfer_schedule: LrSchedule::default(),
            hidden_layers: 4,
            hidden_width: 50,
            batch_norm: true,
            theta_y: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.into()));
        if self.iters_last == 0 || self.iters == 0 {
            return bad("iteration budgets must be positive");
        }
        if self.batch < 2 {
            return bad("batch size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.theta_y) {
            return bad("theta_y must lie in [0, 1]");
        }
        let bad_rates = |s: &LrSchedule| s.rates.is_empty() || s.rates.iter().any(|r| !(*r > 0.0 && r.is_finite()));
        if bad_rates(&self.schedule) || bad_rates(&self.transfer_schedule) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}
