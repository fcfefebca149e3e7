//! Discrete hedging of option portfolios: hedge weights from Greeks,
//! the sparse second-order instrument system and the self-financing ledger.

mod greeks;
mod instruments;
mod ledger;
pub mod lsqr;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Model;

pub use greeks::{closed_form_quote, ClosedFormGreeks, GreekSource, PointQuote};
pub use instruments::{Instrument, InstrumentSpec, QuoteBatch};
pub use ledger::{run_hedge, stopping_time, HedgeLedger, LedgerRow, PathLedger};
pub use lsqr::{lsqr_solve, CooMatrix, LsqrOptions, LsqrSolution};
pub use weights::{
    assemble_second_order, charm_estimate, delta_weights, gamma_weights, HedgeWeights, LocalQuote, PortfolioGreeks,
    RowLabel, SecondOrderSystem,
};

/// Hedging rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Assets only, offsetting first derivatives in the tradeables.
    Delta,
    /// Instruments offset first derivatives in the non-tradeable components.
    DeltaVega,
    /// Instruments offset the second derivatives selected by the index set.
    DeltaGamma,
    /// Both the vega rows and the selected second derivatives.
    #[serde(rename = "second-order")]
    DeltaVegaSecondOrder,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Delta => "delta",
            Strategy::DeltaVega => "delta-vega",
            Strategy::DeltaGamma => "delta-gamma",
            Strategy::DeltaVegaSecondOrder => "second-order",
        }
    }

    /// True when the strategy reads second derivatives.
    pub fn needs_gamma(self) -> bool {
        matches!(self, Strategy::DeltaGamma | Strategy::DeltaVegaSecondOrder)
    }

    /// True when the strategy trades instruments besides the assets.
    pub fn uses_instruments(self) -> bool {
        self != Strategy::Delta
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Strategy::Delta, Strategy::DeltaVega, Strategy::DeltaGamma, Strategy::DeltaVegaSecondOrder]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// Second-order pairs `(i, l)` to offset, over all `d` state components.
/// Explicit pairs are one-based.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSet {
    #[default]
    Empty,
    Diagonal,
    Upper,
    Full,
    Pairs(Vec<[usize; 2]>),
}

impl IndexSet {
    /// Zero-based pairs for dimension `d`.
    pub fn pairs(&self, d: usize) -> Result<Vec<(usize, usize)>> {
        Ok(match self {
            IndexSet::Empty => Vec::new(),
            IndexSet::Diagonal => (0..d).map(|i| (i, i)).collect(),
            IndexSet::Upper => (0..d).flat_map(|i| (i..d).map(move |l| (i, l))).collect(),
            IndexSet::Full => (0..d).flat_map(|i| (0..d).map(move |l| (i, l))).collect(),
            IndexSet::Pairs(p) => p
                .iter()
                .map(|&[i, l]| {
                    if (1..=d).contains(&i) && (1..=d).contains(&l) {
                        Ok((i - 1, l - 1))
                    } else {
                        Err(Error::Config(format!("index pair ({i}, {l}) outside 1..{d}")))
                    }
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Reporting date of the hedging PnL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// When the last contract is settled.
    Tau,
    #[default]
    Maturity,
}

/// One hedging run: strategy, rebalancing frequency and instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeConfig {
    pub strategy: Strategy,
    /// Number `N` of equally spaced rebalancing dates, including time zero.
    pub rebalances: usize,
    #[serde(default)]
    pub index_set: IndexSet,
    #[serde(default)]
    pub instruments: Vec<InstrumentSpec>,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub lsqr: LsqrOptions,
}

impl HedgeConfig {
    pub fn new(strategy: Strategy, rebalances: usize) -> Self {
        HedgeConfig {
            strategy,
            rebalances,
            index_set: IndexSet::Empty,
            instruments: Vec::new(),
            horizon: Horizon::Maturity,
            lsqr: LsqrOptions::default(),
        }
    }

    /// Rows of the second-order system for `d` state components of which the first `m` trade.
    pub fn rows(&self, d: usize, m: usize) -> Result<Vec<RowLabel>> {
        let mut rows = Vec::new();
        if matches!(self.strategy, Strategy::DeltaVega | Strategy::DeltaVegaSecondOrder) {
            rows.extend((m..d).map(|l| RowLabel::Vega { l }));
        }
        if self.strategy.needs_gamma() {
            rows.extend(self.index_set.pairs(d)?.into_iter().map(|(i, l)| RowLabel::Gamma { i, l }));
        }
        Ok(rows)
    }

    /// Instruments traded by this strategy, validated against `model`.
    pub fn resolve_instruments(&self, model: &Model, horizon: f64) -> Result<Vec<Instrument>> {
        if !self.strategy.uses_instruments() {
            return Ok(Vec::new());
        }
        self.instruments.iter().map(|s| s.resolve(model, horizon)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_sets_enumerate_pairs() {
        assert_eq!(IndexSet::Upper.pairs(2).unwrap(), vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(IndexSet::Full.pairs(2).unwrap().len(), 4);
        assert_eq!(IndexSet::Diagonal.pairs(3).unwrap(), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(IndexSet::Pairs(vec![[1, 2]]).pairs(2).unwrap(), vec![(0, 1)]);
        assert!(IndexSet::Pairs(vec![[0, 1]]).pairs(2).is_err());
        assert!(IndexSet::Pairs(vec![[1, 3]]).pairs(2).is_err());
    }

    #[test]
    fn strategy_rows() {
        let mut cfg = HedgeConfig::new(Strategy::DeltaVegaSecondOrder, 5);
        cfg.index_set = IndexSet::Pairs(vec![[1, 1]]);
        assert_eq!(cfg.rows(2, 1).unwrap(), vec![RowLabel::Vega { l: 1 }, RowLabel::Gamma { i: 0, l: 0 }]);
        cfg.strategy = Strategy::Delta;
        assert!(cfg.rows(2, 1).unwrap().is_empty());
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = HedgeConfig::new(Strategy::DeltaGamma, 10);
        cfg.index_set = IndexSet::Upper;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<HedgeConfig>(&text).unwrap(), cfg);
        assert_eq!("second-order".parse::<Strategy>().unwrap(), Strategy::DeltaVegaSecondOrder);
    }
}
