//! Payoffs, payoff derivatives, linear BSDE drivers and the discrete
//! reflection operators for Bermudan exercise.
//!
//! Asset indices are zero-based. Payoffs only read the tradeable components
//! `x[0..m]`; for Heston the variance component has a zero gradient.
//!
//! At exact kinks the gradient takes the out-of-the-money branch (zero).
//! Cash-or-nothing payoffs have a zero gradient almost everywhere, so their
//! terminal `Z` row is zero even though the payoff is discontinuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Model, ModelKind, ModelSpec, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `max(ω (G − K), 0)` with `G` the geometric mean of all tradeables.
    Geometric { strike: f64, omega: f64 },
    /// `max(K − mean(x_S), 0)`.
    ArithmeticPutOnSubset { strike: f64, assets: Vec<usize> },
    /// `max(max(x_S) − K, 0)`.
    CallOnMax { strike: f64, assets: Vec<usize> },
    /// `max(K − min(x_S), 0)`.
    PutOnMin { strike: f64, assets: Vec<usize> },
    /// `∏_i 1{lower ≤ x_i ≤ upper}` over all tradeables.
    CashOrNothing { lower: f64, upper: f64 },
    VanillaCall { strike: f64, asset: usize },
    VanillaPut { strike: f64, asset: usize },
    /// `max(x_long − K x_short, 0)`.
    ExchangeCall { ratio: f64, long: usize, short: usize },
}

/// One contract: payoff plus `exercise_count` equally spaced exercise
/// dates `kT/R`, `k = 1..R`. `R = 1` is European.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub payoff: Payoff,
    pub exercise_count: usize,
}

impl ContractSpec {
    pub fn european(payoff: Payoff) -> Self {
        ContractSpec { payoff, exercise_count: 1 }
    }

    pub fn bermudan(payoff: Payoff, exercise_count: usize) -> Self {
        ContractSpec { payoff, exercise_count }
    }

    pub fn geometric_call(strike: f64) -> Payoff {
        Payoff::Geometric { strike, omega: 1.0 }
    }

    pub fn geometric_put(strike: f64) -> Payoff {
        Payoff::Geometric { strike, omega: -1.0 }
    }

    /// True when grid index `n` is an early exercise date, i.e. in `R \ {0, T}`.
    pub fn reflects_at(&self, grid: &TimeGrid, n: usize) -> bool {
        let steps = grid.n_steps();
        n > 0 && n < steps && (n * self.exercise_count) % steps == 0
    }

    /// True when grid index `n` is in `R \ {0}`, maturity included.
    pub fn exercisable_at(&self, grid: &TimeGrid, n: usize) -> bool {
        n == grid.n_steps() || self.reflects_at(grid, n)
    }

    pub fn validate(&self, m: usize, grid: &TimeGrid) -> Result<()> {
        let check = |i: usize| {
            if i >= m {
                Err(Error::Config(format!("asset index {i} out of range for {m} tradeables")))
            } else {
                Ok(())
            }
        };
        match &self.payoff {
            Payoff::Geometric { omega, .. } => {
                if omega.abs() != 1.0 {
                    return Err(Error::Config("geometric omega must be ±1".into()));
                }
            }
            Payoff::ArithmeticPutOnSubset { assets, .. } | Payoff::CallOnMax { assets, .. } | Payoff::PutOnMin { assets, .. } => {
                if assets.is_empty() {
                    return Err(Error::Config("asset subset is empty".into()));
                }
                assets.iter().try_for_each(|&i| check(i))?;
            }
            Payoff::CashOrNothing { lower, upper } => {
                if lower > upper {
                    return Err(Error::Config("cash-or-nothing bounds are reversed".into()));
                }
            }
            Payoff::VanillaCall { asset, .. } | Payoff::VanillaPut { asset, .. } => check(*asset)?,
            Payoff::ExchangeCall { long, short, .. } => {
                check(*long)?;
                check(*short)?;
            }
        }
        if self.exercise_count == 0 || grid.n_steps() % self.exercise_count != 0 {
            return Err(Error::Config(format!(
                "{} exercise dates are not representable on a {}-step grid",
                self.exercise_count,
                grid.n_steps()
            )));
        }
        Ok(())
    }
}

fn geometric_mean(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let product: f64 = x.iter().product();
    if product.is_normal() {
        product.powf(1.0 / n)
    } else {
        (x.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    }
}

fn argmax(x: &[f64], assets: &[usize]) -> usize {
    let mut best = assets[0];
    for &i in &assets[1..] {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

fn argmin(x: &[f64], assets: &[usize]) -> usize {
    let mut best = assets[0];
    for &i in &assets[1..] {
        if x[i] < x[best] {
            best = i;
        }
    }
    best
}

impl Payoff {
    /// Payoff at state `x`, reading the first `m` components.
    pub fn value(&self, x: &[f64], m: usize) -> f64 {
        match self {
            Payoff::Geometric { strike, omega } => (omega * (geometric_mean(&x[..m]) - strike)).max(0.0),
            Payoff::ArithmeticPutOnSubset { strike, assets } => {
                let mean = assets.iter().map(|&i| x[i]).sum::<f64>() / assets.len() as f64;
                (strike - mean).max(0.0)
            }
            Payoff::CallOnMax { strike, assets } => (x[argmax(x, assets)] - strike).max(0.0),
            Payoff::PutOnMin { strike, assets } => (strike - x[argmin(x, assets)]).max(0.0),
            Payoff::CashOrNothing { lower, upper } => {
                if x[..m].iter().all(|v| v >= lower && v <= upper) {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::VanillaCall { strike, asset } => (x[*asset] - strike).max(0.0),
            Payoff::VanillaPut { strike, asset } => (strike - x[*asset]).max(0.0),
            Payoff::ExchangeCall { ratio, long, short } => (x[*long] - ratio * x[*short]).max(0.0),
        }
    }

    /// Almost-everywhere gradient, written into the `d`-wide row `out`.
    pub fn gradient(&self, x: &[f64], m: usize, out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Payoff::Geometric { strike, omega } => {
                let g = geometric_mean(&x[..m]);
                if omega * (g - strike) > 0.0 {
                    for i in 0..m {
                        out[i] = omega * g / (m as f64 * x[i]);
                    }
                }
            }
            Payoff::ArithmeticPutOnSubset { strike, assets } => {
                let n = assets.len() as f64;
                let mean = assets.iter().map(|&i| x[i]).sum::<f64>() / n;
                if strike - mean > 0.0 {
                    for &i in assets {
                        out[i] -= 1.0 / n;
                    }
                }
            }
            Payoff::CallOnMax { strike, assets } => {
                let i = argmax(x, assets);
                if x[i] - strike > 0.0 {
                    out[i] = 1.0;
                }
            }
            Payoff::PutOnMin { strike, assets } => {
                let i = argmin(x, assets);
                if strike - x[i] > 0.0 {
                    out[i] = -1.0;
                }
            }
            Payoff::CashOrNothing { .. } => {}
            Payoff::VanillaCall { strike, asset } => {
                if x[*asset] - strike > 0.0 {
                    out[*asset] = 1.0;
                }
            }
            Payoff::VanillaPut { strike, asset } => {
                if strike - x[*asset] > 0.0 {
                    out[*asset] = -1.0;
                }
            }
            Payoff::ExchangeCall { ratio, long, short } => {
                if x[*long] - ratio * x[*short] > 0.0 {
                    out[*long] += 1.0;
                    out[*short] -= ratio;
                }
            }
        }
    }

    /// Almost-everywhere Hessian (`d×d`, row-major). Only the geometric
    /// payoff has a nonzero Hessian away from kinks.
    pub fn hessian(&self, x: &[f64], m: usize, d: usize, out: &mut [f64]) {
        out.fill(0.0);
        if let Payoff::Geometric { strike, omega } = self {
            let g = geometric_mean(&x[..m]);
            if omega * (g - strike) > 0.0 {
                let mf = m as f64;
                for i in 0..m {
                    for l in 0..m {
                        let mut h = g / (mf * x[i]) / (mf * x[l]);
                        if i == l {
                            h -= g / (mf * x[i] * x[i]);
                        }
                        out[i * d + l] = omega * h;
                    }
                }
            }
        }
    }
}

/// A portfolio of `J` contracts written on one shared risk-factor process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub model: ModelSpec,
    pub maturity: f64,
    pub contracts: Vec<ContractSpec>,
}

impl PortfolioSpec {
    pub fn j(&self) -> usize {
        self.contracts.len()
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<Model> {
        if self.contracts.is_empty() {
            return Err(Error::Config("portfolio has no contracts".into()));
        }
        if (grid.horizon() - self.maturity).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "grid horizon {} differs from maturity {}",
                grid.horizon(),
                self.maturity
            )));
        }
        let model = self.model.build()?;
        for c in &self.contracts {
            c.validate(model.m(), grid)?;
        }
        Ok(model)
    }
}

/// Coefficients of the linear driver `f_j(t, x, y, z) = −r y_j + z_j · a(x)`.
/// `a` is written into `a_out` (width `d`) and its Jacobian
/// `∂_l a_k` into `da_out` (`d×d`, row `k`).
pub fn driver_coefficients(model: &Model, _t: f64, x: &[f64], a_out: &mut [f64], da_out: &mut [f64]) -> Result<()> {
    da_out.fill(0.0);
    match model.kind() {
        ModelKind::BlackScholes => {
            for (a, u) in a_out.iter_mut().zip(model.bs_driver_z()) {
                *a = -u;
            }
        }
        ModelKind::Heston => {
            let h = model.spec().heston.expect("validated");
            let premium = model.spec().mu_bar[0] - model.r() + model.q()[0];
            let c = (1.0 - h.rho * h.rho).sqrt();
            let nu = x[1].abs();
            let w = nu.sqrt();
            if w <= model.singular_tol() {
                return Err(Error::SingularDiffusion(format!("√ν = {w:.3e} in driver")));
            }
            a_out[0] = -premium / (c * w);
            a_out[1] = 0.0;
            da_out[1] = premium / c * 0.5 * nu.powf(-1.5) * x[1].signum();
        }
    }
    Ok(())
}

/// Driver value and Jacobians for the whole collection at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverEval {
    pub value: Vec<f64>,
    /// `J×d`.
    pub grad_x: Vec<f64>,
    /// `J`.
    pub grad_y: Vec<f64>,
    /// `J×d`.
    pub grad_z: Vec<f64>,
}

/// Evaluates the driver of every contract at `(t, x, y, z)` with `z` of shape `J×d`.
pub fn driver(model: &Model, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<DriverEval> {
    let d = model.d();
    let j = y.len();
    if z.len() != j * d {
        return Err(Error::ShapeMismatch(format!("z has {} entries, expected {}", z.len(), j * d)));
    }
    let mut a = vec![0.0; d];
    let mut da = vec![0.0; d * d];
    driver_coefficients(model, t, x, &mut a, &mut da)?;
    let r = model.r();
    let mut eval = DriverEval { value: vec![0.0; j], grad_x: vec![0.0; j * d], grad_y: vec![-r; j], grad_z: vec![0.0; j * d] };
    for c in 0..j {
        let zc = &z[c * d..(c + 1) * d];
        eval.value[c] = -r * y[c] + zc.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
        eval.grad_z[c * d..(c + 1) * d].copy_from_slice(&a);
        for l in 0..d {
            eval.grad_x[c * d + l] = (0..d).map(|k| zc[k] * da[k * d + l]).sum();
        }
    }
    Ok(eval)
}

/// Exercise trigger shared by both reflections.
pub fn exercise_triggered(contract: &ContractSpec, grid: &TimeGrid, n: usize, x: &[f64], m: usize, y_tilde: f64) -> bool {
    contract.reflects_at(grid, n) && contract.payoff.value(x, m) > y_tilde
}

/// `y = ỹ + 1{t_n ∈ R\{0,T}} 1{g(x) > ỹ} (g(x) − ỹ)`.
pub fn reflect_y(contract: &ContractSpec, grid: &TimeGrid, n: usize, x: &[f64], m: usize, y_tilde: f64) -> f64 {
    if contract.reflects_at(grid, n) {
        let g = contract.payoff.value(x, m);
        if g > y_tilde {
            return g;
        }
    }
    y_tilde
}

/// Replaces `z` by `∇g(x) σ(t_n, x)` whenever [`reflect_y`] exercises.
pub fn reflect_z(contract: &ContractSpec, model: &Model, grid: &TimeGrid, n: usize, x: &[f64], y_tilde: f64, z: &mut [f64]) {
    if exercise_triggered(contract, grid, n, x, model.m(), y_tilde) {
        exercise_z(contract, model, grid.t(n), x, z);
    }
}

/// Writes `∇g(x) σ(t, x)` into the `d`-wide row `z`.
pub fn exercise_z(contract: &ContractSpec, model: &Model, t: f64, x: &[f64], z: &mut [f64]) {
    let d = model.d();
    let mut grad = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    contract.payoff.gradient(x, model.m(), &mut grad);
    model.diffusion(t, x, &mut sigma);
    for k in 0..d {
        z[k] = (0..d).map(|i| grad[i] * sigma[i * d + k]).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::HestonParams;

    fn bs1(mu: f64, sigma: f64, r: f64) -> Model {
        ModelSpec::black_scholes_uniform(1, 100.0, mu, sigma, 0.0, r, 0.0).build().unwrap()
    }

    #[test]
    fn payoff_examples() {
        let call = ContractSpec::geometric_call(100.0);
        assert_eq!(call.value(&[100.0, 100.0], 2), 0.0);
        assert!((call.value(&[100.0, 121.0], 2) - 10.0).abs() < 1e-12);
        let cash = Payoff::CashOrNothing { lower: 50.0, upper: 150.0 };
        assert_eq!(cash.value(&[100.0; 4], 4), 1.0);
        assert_eq!(cash.value(&[100.0, 200.0, 100.0, 100.0], 4), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let mut g = [0.0];
        Payoff::VanillaCall { strike: 100.0, asset: 0 }.gradient(&[120.0], 1, &mut g);
        assert_eq!(g[0], 1.0);
        Payoff::VanillaCall { strike: 100.0, asset: 0 }.gradient(&[100.0], 1, &mut g);
        assert_eq!(g[0], 0.0);
        let mut g2 = [0.0; 2];
        ContractSpec::geometric_call(100.0).gradient(&[100.0, 121.0], 2, &mut g2);
        assert!((g2[0] - 0.5 * 110.0 / 100.0).abs() < 1e-12);
        assert!((g2[1] - 0.5 * 110.0 / 121.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_hessian_matches_gradient_differences() {
        let p = ContractSpec::geometric_put(120.0);
        let x = [95.0, 105.0, 90.0];
        let mut h = [0.0; 9];
        p.hessian(&x, 3, 3, &mut h);
        for l in 0..3 {
            let step = 1e-5 * x[l];
            let (mut xp, mut xm) = (x, x);
            xp[l] += step;
            xm[l] -= step;
            let (mut gp, mut gm) = ([0.0; 3], [0.0; 3]);
            p.gradient(&xp, 3, &mut gp);
            p.gradient(&xm, 3, &mut gm);
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((fd - h[i * 3 + l]).abs() < 1e-7, "{fd} vs {}", h[i * 3 + l]);
            }
        }
    }

    #[test]
    fn driver_examples() {
        // zero risk premium
        let m = ModelSpec::black_scholes_uniform(2, 100.0, 0.03, 0.2, 0.01, 0.04, 0.3).build().unwrap();
        let e = driver(&m, 0.0, &[100.0, 90.0], &[2.0], &[1.0, -3.0]).unwrap();
        assert!((e.value[0] + 0.08).abs() < 1e-15);
        assert!(e.grad_z.iter().all(|v| v.abs() < 1e-15));
        // hand substitution
        let m = bs1(0.1, 0.25, 0.0);
        let e = driver(&m, 0.0, &[100.0], &[0.0], &[1.0]).unwrap();
        assert!((e.value[0] + 0.4).abs() < 1e-15);
        // Heston set A
        let h = ModelSpec::heston(10.0, 0.0625, 0.1, 0.0, 0.1, HestonParams { kappa: 5.0, nu_bar: 0.16, rho: 0.1, eta: 0.9 })
            .build()
            .unwrap();
        let e = driver(&h, 0.0, &[10.0, 0.0625], &[3.0], &[0.7, 0.2]).unwrap();
        assert_eq!(e.value[0], -0.1 * 3.0);
        assert_eq!(e.grad_y[0], -0.1);
    }

    #[test]
    fn heston_driver_jacobian_matches_differences() {
        let h = ModelSpec::heston(10.0, 0.0625, 0.15, 0.02, 0.1, HestonParams { kappa: 5.0, nu_bar: 0.16, rho: 0.3, eta: 0.9 })
            .build()
            .unwrap();
        let x = [9.5, 0.08];
        let (y, z) = ([1.2], [0.6, -0.4]);
        let e = driver(&h, 0.0, &x, &y, &z).unwrap();
        let step = 1e-7;
        let fp = driver(&h, 0.0, &[x[0], x[1] + step], &y, &z).unwrap().value[0];
        let fm = driver(&h, 0.0, &[x[0], x[1] - step], &y, &z).unwrap().value[0];
        let fd = (fp - fm) / (2.0 * step);
        assert!((fd - e.grad_x[1]).abs() < 1e-6 * fd.abs().max(1.0));
        assert_eq!(e.grad_x[0], 0.0);
    }

    #[test]
    fn reflection_examples() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let put = ContractSpec::bermudan(Payoff::VanillaPut { strike: 100.0, asset: 0 }, 10);
        // payoff 5 at x = 95
        assert_eq!(reflect_y(&put, &grid, 3, &[95.0], 1, 3.0), 5.0);
        assert_eq!(reflect_y(&put, &grid, 3, &[95.0], 1, 7.0), 7.0);
        assert_eq!(reflect_y(&put, &grid, 0, &[95.0], 1, 3.0), 3.0);
        assert_eq!(reflect_y(&put, &grid, 10, &[95.0], 1, 3.0), 3.0);
        let euro = ContractSpec::european(Payoff::VanillaPut { strike: 100.0, asset: 0 });
        assert_eq!(reflect_y(&euro, &grid, 3, &[95.0], 1, 3.0), 3.0);

        let m = bs1(0.0, 0.25, 0.0);
        let call = ContractSpec::bermudan(Payoff::VanillaCall { strike: 100.0, asset: 0 }, 10);
        let mut z = [1.0];
        reflect_z(&call, &m, &grid, 4, &[120.0], 10.0, &mut z);
        assert_eq!(z[0], 30.0);
        let mut z = [1.0];
        reflect_z(&call, &m, &grid, 4, &[120.0], 25.0, &mut z);
        assert_eq!(z[0], 1.0);
        let cash = ContractSpec::bermudan(Payoff::CashOrNothing { lower: 50.0, upper: 150.0 }, 10);
        let mut z = [1.0];
        reflect_z(&cash, &m, &grid, 4, &[120.0], 0.5, &mut z);
        assert_eq!(z[0], 0.0);
    }

    #[test]
    fn exercise_schedule_validation() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let c = ContractSpec::bermudan(Payoff::VanillaPut { strike: 100.0, asset: 0 }, 3);
        assert!(c.validate(1, &grid).is_err());
        let c = ContractSpec::bermudan(Payoff::VanillaPut { strike: 100.0, asset: 1 }, 5);
        assert!(c.validate(1, &grid).is_err());
        let c = ContractSpec::bermudan(Payoff::VanillaPut { strike: 100.0, asset: 0 }, 5);
        c.validate(1, &grid).unwrap();
        let dates: Vec<usize> = (0..=20).filter(|&n| c.exercisable_at(&grid, n)).collect();
        assert_eq!(dates, vec![4, 8, 12, 16, 20]);
    }
}
