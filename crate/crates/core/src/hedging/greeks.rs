//! Sources of prices and Greeks for the hedging ledger: a trained solver
//! artifact, or closed forms for European Black–Scholes claims.

use rayon::prelude::*;

use crate::closed_form::{bs_vanilla, geometric_basket, margrabe, ExchangeInputs, OptionKind};
use crate::contracts::{Payoff, PortfolioSpec};
use crate::error::{Error, Result};
use crate::market::{Model, ModelKind, TimeGrid};
use crate::solver::{GreekBatch, SolverArtifact};

/// Prices, deltas and (optionally) gammas of a portfolio on a time grid.
pub trait GreekSource: Sync {
    fn portfolio(&self) -> &PortfolioSpec;
    fn grid(&self) -> &TimeGrid;
    fn model(&self) -> &Model;
    /// True when [`GreekSource::greeks`] fills second derivatives.
    fn has_gamma(&self) -> bool;
    /// Greeks at grid index `n` for row-major states `B×d`.
    fn greeks(&self, n: usize, states: &[f64]) -> Result<GreekBatch>;
    /// Time-zero prices, one per contract.
    fn initial_prices(&self) -> Result<Vec<f64>>;
}

impl GreekSource for SolverArtifact {
    fn portfolio(&self) -> &PortfolioSpec {
        SolverArtifact::portfolio(self)
    }
    fn grid(&self) -> &TimeGrid {
        SolverArtifact::grid(self)
    }
    fn model(&self) -> &Model {
        SolverArtifact::model(self)
    }
    fn has_gamma(&self) -> bool {
        SolverArtifact::has_gamma(self)
    }
    fn greeks(&self, n: usize, states: &[f64]) -> Result<GreekBatch> {
        self.evaluate(n, states)
    }
    fn initial_prices(&self) -> Result<Vec<f64>> {
        SolverArtifact::initial_prices(self)
    }
}

/// Price, gradient (`d`) and Hessian (`d×d`) of one claim at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PointQuote {
    pub price: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Closed-form quote of a European payoff under Black–Scholes with `tau`
/// years to expiry. At `tau = 0` the payoff and its a.e. derivatives are returned.
pub fn closed_form_quote(payoff: &Payoff, model: &Model, x: &[f64], tau: f64) -> Result<PointQuote> {
    let d = model.d();
    let m = model.m();
    let mut q = PointQuote { price: 0.0, grad: vec![0.0; d], hess: vec![0.0; d * d] };
    if tau <= 0.0 {
        q.price = payoff.value(x, m);
        payoff.gradient(x, m, &mut q.grad);
        payoff.hessian(x, m, d, &mut q.hess);
        return Ok(q);
    }
    if model.kind() != ModelKind::BlackScholes {
        return Err(Error::Config("closed-form Greeks need a Black–Scholes model".into()));
    }
    let spec = model.spec();
    let (r, sig, div) = (spec.r, &spec.sigma_bar, &spec.q);
    match payoff {
        Payoff::VanillaCall { strike, asset } | Payoff::VanillaPut { strike, asset } => {
            let kind = if matches!(payoff, Payoff::VanillaCall { .. }) { OptionKind::Call } else { OptionKind::Put };
            let a = *asset;
            let v = bs_vanilla(x[a], *strike, r, div[a], sig[a], tau, kind)?;
            q.price = v.price;
            q.grad[a] = v.delta;
            q.hess[a * d + a] = v.gamma;
        }
        Payoff::Geometric { strike, omega } => {
            let kind = if *omega > 0.0 { OptionKind::Call } else { OptionKind::Put };
            let b = geometric_basket(&x[..m], *strike, kind, sig, &spec.corr, r, div, tau)?;
            q.price = b.price;
            q.grad[..m].copy_from_slice(&b.delta);
            for i in 0..m {
                q.hess[i * d..i * d + m].copy_from_slice(&b.gamma[i * m..(i + 1) * m]);
            }
        }
        Payoff::ExchangeCall { ratio, long, short } => {
            let (k, j) = (*long, *short);
            let e = margrabe(&ExchangeInputs {
                s_k: x[k],
                s_j: x[j],
                ratio: *ratio,
                sigma_k: sig[k],
                sigma_j: sig[j],
                rho: spec.corr[k * m + j],
                q_k: div[k],
                q_j: div[j],
                tau,
            })?;
            q.price = e.price;
            q.grad[k] = e.delta_k;
            q.grad[j] = e.delta_j;
            q.hess[k * d + k] = e.gamma_kk;
            q.hess[k * d + j] = e.gamma_kj;
            q.hess[j * d + k] = e.gamma_jk;
            q.hess[j * d + j] = e.gamma_jj;
        }
        other => return Err(Error::Config(format!("no closed form for payoff {other:?}"))),
    }
    Ok(q)
}

/// Exact Greeks of a portfolio of European vanilla, geometric basket and
/// exchange options under Black–Scholes, standing in for a trained artifact.
#[derive(Debug, Clone)]
pub struct ClosedFormGreeks {
    portfolio: PortfolioSpec,
    grid: TimeGrid,
    model: Model,
}

impl ClosedFormGreeks {
    pub fn new(portfolio: PortfolioSpec, grid: TimeGrid) -> Result<Self> {
        let model = portfolio.validate(&grid)?;
        if model.kind() != ModelKind::BlackScholes {
            return Err(Error::Config("closed-form Greeks need a Black–Scholes model".into()));
        }
        for c in &portfolio.contracts {
            if c.exercise_count != 1 {
                return Err(Error::Config("closed-form Greeks need European contracts".into()));
            }
            closed_form_quote(&c.payoff, &model, model.x0(), grid.horizon())?;
        }
        Ok(ClosedFormGreeks { portfolio, grid, model })
    }
}

impl GreekSource for ClosedFormGreeks {
    fn portfolio(&self) -> &PortfolioSpec {
        &self.portfolio
    }
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn model(&self) -> &Model {
        &self.model
    }
    fn has_gamma(&self) -> bool {
        true
    }

    fn greeks(&self, n: usize, states: &[f64]) -> Result<GreekBatch> {
        let d = self.model.d();
        let j = self.portfolio.j();
        if n > self.grid.n_steps() {
            return Err(Error::Domain(format!("time index {n} exceeds the grid")));
        }
        if states.is_empty() || states.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("{} state entries for dimension {d}", states.len())));
        }
        let batch = states.len() / d;
        let t = self.grid.t(n);
        let tau = self.grid.horizon() - t;
        let per_state: Vec<Vec<PointQuote>> = states
            .par_chunks(d)
            .map(|x| self.portfolio.contracts.iter().map(|c| closed_form_quote(&c.payoff, &self.model, x, tau)).collect())
            .collect::<Result<_>>()?;
        let mut out = GreekBatch {
            batch,
            j,
            d,
            y_tilde: Vec::with_capacity(batch * j),
            y: Vec::new(),
            z_tilde: Vec::with_capacity(batch * j * d),
            z: Vec::new(),
            gamma_hat: None,
            delta: Vec::with_capacity(batch * j * d),
            gamma: Some(Vec::with_capacity(batch * j * d * d)),
        };
        let mut sigma = vec![0.0; d * d];
        let gamma = out.gamma.as_mut().expect("allocated above");
        for (x, quotes) in states.chunks(d).zip(&per_state) {
            self.model.diffusion(t, x, &mut sigma);
            for q in quotes {
                out.y_tilde.push(q.price);
                out.delta.extend_from_slice(&q.grad);
                gamma.extend_from_slice(&q.hess);
                for k in 0..d {
                    out.z_tilde.push((0..d).map(|i| q.grad[i] * sigma[i * d + k]).sum());
                }
            }
        }
        out.y = out.y_tilde.clone();
        out.z = out.z_tilde.clone();
        Ok(out)
    }

    fn initial_prices(&self) -> Result<Vec<f64>> {
        Ok(self.greeks(0, self.model.x0())?.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ContractSpec;
    use crate::market::ModelSpec;

    fn call_portfolio() -> (PortfolioSpec, TimeGrid) {
        let model = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0);
        let c = ContractSpec::european(Payoff::VanillaCall { strike: 100.0, asset: 0 });
        (PortfolioSpec { model, maturity: 1.0, contracts: vec![c] }, TimeGrid::new(1.0, 10).unwrap())
    }

    #[test]
    fn closed_form_call_matches_black_scholes() {
        let (p, g) = call_portfolio();
        let src = ClosedFormGreeks::new(p, g).unwrap();
        let b = src.greeks(0, &[100.0]).unwrap();
        assert!((b.y[0] - 9.947645).abs() < 1e-5);
        assert!((b.delta[0] - 0.549738).abs() < 1e-5);
        assert!((b.gamma.unwrap()[0] - 0.0158335).abs() < 1e-6);
        assert!((b.z[0] - b.delta[0] * 0.25 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn terminal_itm_call_has_unit_delta() {
        let (p, g) = call_portfolio();
        let src = ClosedFormGreeks::new(p, g).unwrap();
        let b = src.greeks(10, &[120.0]).unwrap();
        assert_eq!(b.y[0], 20.0);
        assert_eq!(b.delta[0], 1.0);
    }

    #[test]
    fn bermudan_contracts_are_rejected() {
        let (mut p, g) = call_portfolio();
        p.contracts[0].exercise_count = 5;
        assert!(ClosedFormGreeks::new(p, g).is_err());
    }
}
