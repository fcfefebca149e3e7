//! Hedging instruments: European vanillas and exchange options quoted in
//! closed form, or single-contract solver artifacts trained on their own grid.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::greeks::closed_form_quote;
use crate::closed_form::OptionKind;
use crate::contracts::Payoff;
use crate::error::{Error, Result};
use crate::market::{Model, ModelKind};
use crate::solver::SolverArtifact;

/// Serializable instrument description. Asset indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstrumentSpec {
    /// European call or put priced with the model's Black–Scholes parameters.
    BsVanilla { option: OptionKind, strike: f64, asset: usize, maturity: f64 },
    /// Exchange call `max(S_long − ratio S_short, 0)`.
    Margrabe { ratio: f64, long: usize, short: usize, maturity: f64 },
    /// Price and Greeks read from a saved single-contract artifact whose
    /// grid ends at `maturity`.
    SolverPriced { artifact: PathBuf, maturity: f64 },
}

impl InstrumentSpec {
    pub fn maturity(&self) -> f64 {
        match self {
            InstrumentSpec::BsVanilla { maturity, .. }
            | InstrumentSpec::Margrabe { maturity, .. }
            | InstrumentSpec::SolverPriced { maturity, .. } => *maturity,
        }
    }

    /// Validates against the hedged model and loads artifacts.
    pub fn resolve(&self, model: &Model, horizon: f64) -> Result<Instrument> {
        match self {
            InstrumentSpec::SolverPriced { artifact, maturity } => {
                let art = SolverArtifact::load(artifact)?;
                Instrument::solver(Arc::new(art), *maturity, model, horizon)
            }
            _ => Instrument::closed_form(self.clone(), model, horizon),
        }
    }
}

/// Quotes of one instrument at `B` states: prices `B`, gradients `B×d`,
/// Hessians `B×d×d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteBatch {
    pub price: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Validated instrument, ready to quote.
#[derive(Debug, Clone)]
pub enum Instrument {
    ClosedForm { spec: InstrumentSpec, payoff: Payoff, model: Model },
    Solver { artifact: Arc<SolverArtifact>, maturity: f64 },
}

fn check_maturity(maturity: f64, horizon: f64) -> Result<()> {
    if !(maturity.is_finite() && maturity >= horizon - 1e-12) {
        return Err(Error::Config(format!(
            "instrument maturity {maturity} ends before the hedging horizon {horizon}"
        )));
    }
    Ok(())
}

impl Instrument {
    /// Closed-form instrument under the Black–Scholes `model`.
    pub fn closed_form(spec: InstrumentSpec, model: &Model, horizon: f64) -> Result<Self> {
        check_maturity(spec.maturity(), horizon)?;
        if model.kind() != ModelKind::BlackScholes {
            return Err(Error::Config("closed-form instruments need a Black–Scholes model".into()));
        }
        let m = model.m();
        let in_range = |a: usize| {
            if a < m {
                Ok(())
            } else {
                Err(Error::Config(format!("instrument asset {a} is not one of the {m} tradeables")))
            }
        };
        let payoff = match &spec {
            InstrumentSpec::BsVanilla { option, strike, asset, .. } => {
                in_range(*asset)?;
                if !(*strike > 0.0) {
                    return Err(Error::Config("instrument strike must be positive".into()));
                }
                match option {
                    OptionKind::Call => Payoff::VanillaCall { strike: *strike, asset: *asset },
                    OptionKind::Put => Payoff::VanillaPut { strike: *strike, asset: *asset },
                }
            }
            InstrumentSpec::Margrabe { ratio, long, short, .. } => {
                in_range(*long)?;
                in_range(*short)?;
                if long == short || !(*ratio > 0.0) {
                    return Err(Error::Config("exchange instrument needs two distinct legs and a positive ratio".into()));
                }
                Payoff::ExchangeCall { ratio: *ratio, long: *long, short: *short }
            }
            InstrumentSpec::SolverPriced { .. } => {
                return Err(Error::Config("solver-priced instruments need an artifact".into()));
            }
        };
        Ok(Instrument::ClosedForm { spec, payoff, model: model.clone() })
    }

    /// Instrument priced by a single-contract artifact on the hedged model.
    pub fn solver(artifact: Arc<SolverArtifact>, maturity: f64, model: &Model, horizon: f64) -> Result<Self> {
        check_maturity(maturity, horizon)?;
        if artifact.portfolio().j() != 1 {
            return Err(Error::Incompatible("instrument artifacts must price exactly one contract".into()));
        }
        if artifact.portfolio().model != *model.spec() {
            return Err(Error::Incompatible("instrument artifact was trained on a different model".into()));
        }
        if (artifact.grid().horizon() - maturity).abs() > 1e-12 {
            return Err(Error::Incompatible(format!(
                "instrument artifact grid ends at {}, not at maturity {maturity}",
                artifact.grid().horizon()
            )));
        }
        Ok(Instrument::Solver { artifact, maturity })
    }

    pub fn maturity(&self) -> f64 {
        match self {
            Instrument::ClosedForm { spec, .. } => spec.maturity(),
            Instrument::Solver { maturity, .. } => *maturity,
        }
    }

    /// True when quotes carry second derivatives.
    pub fn has_gamma(&self) -> bool {
        match self {
            Instrument::ClosedForm { .. } => true,
            Instrument::Solver { artifact, .. } => artifact.has_gamma(),
        }
    }

    /// State components with a structurally nonzero first derivative.
    pub fn gradient_support(&self, d: usize) -> Vec<usize> {
        match self {
            Instrument::ClosedForm { payoff: Payoff::VanillaCall { asset, .. } | Payoff::VanillaPut { asset, .. }, .. } => {
                vec![*asset]
            }
            Instrument::ClosedForm { payoff: Payoff::ExchangeCall { long, short, .. }, .. } => vec![*long, *short],
            _ => (0..d).collect(),
        }
    }

    /// Index pairs `(i, l)` with a structurally nonzero second derivative.
    pub fn hessian_support(&self, d: usize) -> Vec<(usize, usize)> {
        let legs = self.gradient_support(d);
        legs.iter().flat_map(|&i| legs.iter().map(move |&l| (i, l))).collect()
    }

    /// Quotes at time `t` for row-major states `B×d`.
    pub fn quote(&self, t: f64, states: &[f64], d: usize) -> Result<QuoteBatch> {
        match self {
            Instrument::ClosedForm { spec, payoff, model } => {
                let tau = spec.maturity() - t;
                let quotes: Vec<_> = states
                    .par_chunks(d)
                    .map(|x| closed_form_quote(payoff, model, x, tau))
                    .collect::<Result<_>>()?;
                let mut out = QuoteBatch {
                    price: Vec::with_capacity(quotes.len()),
                    grad: Vec::with_capacity(quotes.len() * d),
                    hess: Vec::with_capacity(quotes.len() * d * d),
                };
                for q in quotes {
                    out.price.push(q.price);
                    out.grad.extend_from_slice(&q.grad);
                    out.hess.extend_from_slice(&q.hess);
                }
                Ok(out)
            }
            Instrument::Solver { artifact, .. } => {
                let grid = artifact.grid();
                let n = ((t / grid.dt()).round().max(0.0) as usize).min(grid.n_steps());
                let g = artifact.evaluate(n, states)?;
                let batch = g.batch;
                let hess = match g.gamma {
                    Some(h) => h,
                    None => vec![0.0; batch * d * d],
                };
                Ok(QuoteBatch { price: g.y, grad: g.delta, hess })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ModelSpec;

    fn bs(d: usize) -> Model {
        ModelSpec::black_scholes_uniform(d, 100.0, 0.0, 0.25, 0.0, 0.0, 0.75).build().unwrap()
    }

    #[test]
    fn maturity_before_horizon_is_rejected() {
        let spec = InstrumentSpec::BsVanilla { option: OptionKind::Put, strike: 100.0, asset: 0, maturity: 0.5 };
        assert!(matches!(spec.resolve(&bs(1), 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn exchange_support_covers_both_legs() {
        let spec = InstrumentSpec::Margrabe { ratio: 1.0, long: 0, short: 1, maturity: 2.0 };
        let inst = spec.resolve(&bs(2), 1.0).unwrap();
        assert_eq!(inst.hessian_support(2), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn vanilla_quote_at_expiry_is_intrinsic() {
        let spec = InstrumentSpec::BsVanilla { option: OptionKind::Put, strike: 100.0, asset: 0, maturity: 1.0 };
        let inst = spec.resolve(&bs(1), 1.0).unwrap();
        let q = inst.quote(1.0, &[90.0], 1).unwrap();
        assert_eq!(q.price, vec![10.0]);
        assert_eq!(q.grad, vec![-1.0]);
    }
}
