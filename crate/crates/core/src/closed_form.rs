//! Closed-form Black–Scholes prices and Greeks: vanilla options with a
//! continuous dividend yield, the Margrabe exchange option, and geometric
//! basket options (which reduce to a one-dimensional vanilla).

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Spread volatilities at or below this level make an exchange option unusable.
pub const SPREAD_TOL: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal distribution function via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    fn omega(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaQuote {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
    pub vomma: f64,
    pub vanna: f64,
}

/// Black–Scholes price and Greeks of a European call or put.
pub fn bs_vanilla(s: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64, kind: OptionKind) -> Result<VanillaQuote> {
    if !(s > 0.0 && k > 0.0 && sigma > 0.0 && tau > 0.0) {
        return Err(Error::Domain(format!("bs_vanilla needs positive S, K, σ, τ (got {s}, {k}, {sigma}, {tau})")));
    }
    let sq = tau.sqrt();
    let vol = sigma * sq;
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    let dq = (-q * tau).exp();
    let dr = (-r * tau).exp();
    let w = kind.omega();
    let price = w * (s * dq * normal_cdf(w * d1) - k * dr * normal_cdf(w * d2));
    let delta = w * dq * normal_cdf(w * d1);
    let pdf = normal_pdf(d1);
    let gamma = dq * pdf / (s * vol);
    let vega = s * dq * pdf * sq;
    Ok(VanillaQuote { price, delta, gamma, vega, vomma: vega * d1 * d2 / sigma, vanna: -dq * pdf * d2 / sigma })
}

/// Inputs of an exchange option paying `max(S_k − K S_j, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeInputs {
    pub s_k: f64,
    pub s_j: f64,
    pub ratio: f64,
    pub sigma_k: f64,
    pub sigma_j: f64,
    pub rho: f64,
    pub q_k: f64,
    pub q_j: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeQuote {
    pub price: f64,
    pub d1: f64,
    pub d2: f64,
    pub spread_vol: f64,
    pub delta_k: f64,
    pub delta_j: f64,
    pub gamma_kk: f64,
    /// `∂_k ∂_j C`.
    pub gamma_kj: f64,
    /// `∂_j ∂_k C`, computed from its own formula.
    pub gamma_jk: f64,
    pub gamma_jj: f64,
}

/// Margrabe price and Greeks.
pub fn margrabe(p: &ExchangeInputs) -> Result<ExchangeQuote> {
    if !(p.s_k > 0.0 && p.s_j > 0.0 && p.tau > 0.0 && p.ratio > 0.0) {
        return Err(Error::Domain("margrabe needs positive prices, ratio and maturity".into()));
    }
    let var = p.sigma_k * p.sigma_k + p.sigma_j * p.sigma_j - 2.0 * p.rho * p.sigma_k * p.sigma_j;
    let spread_vol = var.max(0.0).sqrt();
    if spread_vol <= SPREAD_TOL {
        return Err(Error::DegenerateSpread(spread_vol));
    }
    let sq = p.tau.sqrt();
    let vol = spread_vol * sq;
    let d1 = ((p.s_k / (p.ratio * p.s_j)).ln() + (p.q_j - p.q_k + 0.5 * var) * p.tau) / vol;
    let d2 = d1 - vol;
    let ek = (-p.q_k * p.tau).exp();
    let ej = (-p.q_j * p.tau).exp();
    let (n1, n2) = (normal_pdf(d1), normal_pdf(d2));
    Ok(ExchangeQuote {
        price: ek * p.s_k * normal_cdf(d1) - ej * p.ratio * p.s_j * normal_cdf(d2),
        d1,
        d2,
        spread_vol,
        delta_k: ek * normal_cdf(d1),
        delta_j: -ej * p.ratio * normal_cdf(d2),
        gamma_kk: ek / vol * n1 / p.s_k,
        gamma_kj: -ej / vol * p.ratio * n2 / p.s_k,
        gamma_jk: -ek / vol * n1 / p.s_j,
        gamma_jj: ej / vol * p.ratio * n2 / p.s_j,
    })
}

/// Price, gradient and Hessian of a geometric basket option.
#[derive(Debug, Clone, PartialEq)]
pub struct BasketQuote {
    pub price: f64,
    pub delta: Vec<f64>,
    /// Row-major `d×d`.
    pub gamma: Vec<f64>,
}

/// European option on the geometric mean `G` of `d` correlated Black–Scholes
/// assets. `G` is itself lognormal with volatility
/// `σ_G² = d⁻² Σ σ_i σ_l c_il` and yield `q_G = d⁻¹ Σ (q_i + σ_i²/2) − σ_G²/2`.
#[allow(clippy::too_many_arguments)]
pub fn geometric_basket(
    x: &[f64],
    strike: f64,
    kind: OptionKind,
    sigma: &[f64],
    corr: &[f64],
    r: f64,
    q: &[f64],
    tau: f64,
) -> Result<BasketQuote> {
    let d = x.len();
    let df = d as f64;
    if sigma.len() != d || q.len() != d || corr.len() != d * d {
        return Err(Error::ShapeMismatch("geometric basket inputs disagree on d".into()));
    }
    let mut var = 0.0;
    for i in 0..d {
        for l in 0..d {
            var += sigma[i] * sigma[l] * corr[i * d + l];
        }
    }
    var /= df * df;
    let q_g = (0..d).map(|i| q[i] + 0.5 * sigma[i] * sigma[i]).sum::<f64>() / df - 0.5 * var;
    let g = (x.iter().map(|v| v.ln()).sum::<f64>() / df).exp();
    let v = bs_vanilla(g, strike, r, q_g, var.sqrt(), tau, kind)?;
    let dg: Vec<f64> = x.iter().map(|xi| g / (df * xi)).collect();
    let delta = dg.iter().map(|a| v.delta * a).collect();
    let mut gamma = vec![0.0; d * d];
    for i in 0..d {
        for l in 0..d {
            let mut d2g = dg[i] / (df * x[l]);
            if i == l {
                d2g -= dg[i] / x[i];
            }
            gamma[i * d + l] = v.gamma * dg[i] * dg[l] + v.delta * d2g;
        }
    }
    Ok(BasketQuote { price: v.price, delta, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_779_6).abs() < 1e-15);
        for x in [0.1, 0.7, 1.3, 2.9, 5.0] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn atm_call_matches_high_precision_oracle() {
        let c = bs_vanilla(100.0, 100.0, 0.0, 0.0, 0.25, 1.0, OptionKind::Call).unwrap();
        assert!((c.price - 9.947_644_966_022_579).abs() < 1e-11);
        assert!((c.delta - 0.549_738_224_830_112_9).abs() < 1e-13);
        assert!((c.gamma - 0.015_833_507_477_789_98).abs() < 1e-14);
        assert!((c.vega - 39.583_768_694_474_95).abs() < 1e-10);
        assert!((c.vomma + 2.473_985_543_404_684_3).abs() < 1e-11);
        assert!((c.vanna - 0.197_918_843_472_374_74).abs() < 1e-13);
    }

    #[test]
    fn dividend_quotes_match_oracle() {
        let c = bs_vanilla(105.0, 95.0, 0.03, 0.01, 0.3, 0.7, OptionKind::Call).unwrap();
        let p = bs_vanilla(105.0, 95.0, 0.03, 0.01, 0.3, 0.7, OptionKind::Put).unwrap();
        assert!((c.price - 16.466_773_858_509_654).abs() < 1e-10);
        assert!((c.delta - 0.714_033_122_676_629_4).abs() < 1e-13);
        assert!((p.price - 5.225_008_984_618_629).abs() < 1e-10);
        assert!((p.delta + 0.278_991_320_256_605_72).abs() < 1e-13);
        assert!((p.gamma - 0.012_704_496_805_512_538).abs() < 1e-14);
        let parity = 105.0 * (-0.007f64).exp() - 95.0 * (-0.021f64).exp();
        assert!((c.price - p.price - parity).abs() < 1e-10);
    }

    #[test]
    fn short_maturity_reaches_intrinsic() {
        let c = bs_vanilla(120.0, 100.0, 0.0, 0.0, 0.25, 1e-10, OptionKind::Call).unwrap();
        assert!((c.price - 20.0).abs() < 1e-9);
        assert!((c.delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_delta_slope() {
        let s = 93.0;
        let h = 1e-4;
        let q = |s| bs_vanilla(s, 100.0, 0.02, 0.01, 0.3, 0.8, OptionKind::Put).unwrap();
        let fd = (q(s + h).delta - q(s - h).delta) / (2.0 * h);
        assert!((fd - q(s).gamma).abs() < 1e-6 * q(s).gamma);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(bs_vanilla(0.0, 100.0, 0.0, 0.0, 0.2, 1.0, OptionKind::Call).is_err());
        assert!(bs_vanilla(100.0, 100.0, 0.0, 0.0, 0.2, 0.0, OptionKind::Call).is_err());
    }

    fn symmetric() -> ExchangeInputs {
        ExchangeInputs { s_k: 100.0, s_j: 100.0, ratio: 1.0, sigma_k: 0.25, sigma_j: 0.25, rho: 0.75, q_k: 0.0, q_j: 0.0, tau: 4.0 }
    }

    #[test]
    fn symmetric_exchange_oracle() {
        let q = margrabe(&symmetric()).unwrap();
        assert!((q.spread_vol - 0.176_776_695_296_636_9).abs() < 1e-15);
        assert!((q.d1 + q.d2).abs() < 1e-15);
        assert!((q.price - 14.031_620_480_133_382).abs() < 1e-10);
    }

    #[test]
    fn degenerate_spread_rejected() {
        let mut p = symmetric();
        p.rho = 1.0;
        assert!(matches!(margrabe(&p), Err(Error::DegenerateSpread(_))));
    }

    #[test]
    fn basket_reduces_to_vanilla_in_one_dimension() {
        let b = geometric_basket(&[103.0], 100.0, OptionKind::Put, &[0.3], &[1.0], 0.02, &[0.01], 0.9).unwrap();
        let v = bs_vanilla(103.0, 100.0, 0.02, 0.01, 0.3, 0.9, OptionKind::Put).unwrap();
        assert!((b.price - v.price).abs() < 1e-12);
        assert!((b.delta[0] - v.delta).abs() < 1e-12);
        assert!((b.gamma[0] - v.gamma).abs() < 1e-12);
    }

    #[test]
    fn basket_gradient_and_hessian_match_differences() {
        let d = 3;
        let corr = [1.0, 0.5, 0.2, 0.5, 1.0, 0.4, 0.2, 0.4, 1.0];
        let sig = [0.2, 0.3, 0.25];
        let q = [0.0, 0.01, 0.02];
        let x = [95.0, 102.0, 110.0];
        let f = |x: &[f64]| geometric_basket(x, 100.0, OptionKind::Call, &sig, &corr, 0.03, &q, 1.5).unwrap();
        let b = f(&x);
        for l in 0..d {
            let h = 1e-4 * x[l];
            let (mut xp, mut xm) = (x, x);
            xp[l] += h;
            xm[l] -= h;
            let (bp, bm) = (f(&xp), f(&xm));
            let fd = (bp.price - bm.price) / (2.0 * h);
            assert!((fd - b.delta[l]).abs() < 1e-7);
            for i in 0..d {
                let fd2 = (bp.delta[i] - bm.delta[i]) / (2.0 * h);
                assert!((fd2 - b.gamma[i * d + l]).abs() < 1e-7, "{fd2} vs {}", b.gamma[i * d + l]);
            }
        }
    }
}
