//! Quote table and self-check of the exchange option closed form.

use rand::Rng;

use crate::closed_form::{margrabe, ExchangeInputs, ExchangeQuote};
use crate::error::Result;
use crate::rng::{self, Purpose};

pub const MARGRABE_HEADER: &str =
    "s_k,s_j,ratio,sigma_k,sigma_j,rho,q_k,q_j,tau,price,d1,d2,delta_k,delta_j,gamma_kk,gamma_kj,gamma_jk,gamma_jj";

/// Largest accepted relative gap between an analytic derivative and its central difference.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Largest accepted gap between the two cross derivatives.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Largest accepted relative violation of first-degree homogeneity.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-10;

/// One CSV line in [`MARGRABE_HEADER`] order.
pub fn margrabe_row(p: &ExchangeInputs) -> Result<String> {
    let q = margrabe(p)?;
    let cols = [
        p.s_k, p.s_j, p.ratio, p.sigma_k, p.sigma_j, p.rho, p.q_k, p.q_j, p.tau, q.price, q.d1, q.d2, q.delta_k, q.delta_j,
        q.gamma_kk, q.gamma_kj, q.gamma_jk, q.gamma_jj,
    ];
    Ok(cols.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
}

/// Worst errors found by [`margrabe_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MargrabeCheck {
    pub draws: usize,
    pub max_fd_error: f64,
    pub max_symmetry_error: f64,
    pub max_homogeneity_error: f64,
}

impl MargrabeCheck {
    pub fn passed(&self) -> bool {
        self.max_fd_error <= FD_TOLERANCE
            && self.max_symmetry_error <= SYMMETRY_TOLERANCE
            && self.max_homogeneity_error <= HOMOGENEITY_TOLERANCE
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Random inputs in a moderately-in-the-money-to-out-of-the-money box.
pub fn random_inputs<R: Rng>(rng: &mut R) -> ExchangeInputs {
    ExchangeInputs {
        s_k: rng.random_range(80.0..120.0),
        s_j: rng.random_range(80.0..120.0),
        ratio: rng.random_range(0.8..1.2),
        sigma_k: rng.random_range(0.15..0.5),
        sigma_j: rng.random_range(0.15..0.5),
        rho: rng.random_range(-0.5..0.5),
        q_k: rng.random_range(0.0..0.05),
        q_j: rng.random_range(0.0..0.05),
        tau: rng.random_range(0.25..2.0),
    }
}

/// Compares every derivative with central differences (prices for first
/// order, analytic deltas for second order), the two cross derivatives with
/// each other, and the quote at `(λS_k, λS_j)` with the scaled quote at
/// `(S_k, S_j)`, over `draws` random inputs.
pub fn margrabe_check(draws: usize, seed: u64) -> Result<MargrabeCheck> {
    let mut rng = rng::stream(seed, Purpose::Eval, &[0x6d72_6762], 0);
    let mut out = MargrabeCheck { draws, max_fd_error: 0.0, max_symmetry_error: 0.0, max_homogeneity_error: 0.0 };
    for _ in 0..draws {
        let p = random_inputs(&mut rng);
        let q = margrabe(&p)?;
        let bump = |dk: f64, dj: f64| -> Result<ExchangeQuote> { margrabe(&ExchangeInputs { s_k: p.s_k + dk, s_j: p.s_j + dj, ..p }) };
        let (hk, hj) = (1e-3 * p.s_k, 1e-3 * p.s_j);
        let (kp, km, jp, jm) = (bump(hk, 0.0)?, bump(-hk, 0.0)?, bump(0.0, hj)?, bump(0.0, -hj)?);
        let errors = [
            rel((kp.price - km.price) / (2.0 * hk), q.delta_k),
            rel((jp.price - jm.price) / (2.0 * hj), q.delta_j),
            rel((kp.delta_k - km.delta_k) / (2.0 * hk), q.gamma_kk),
            rel((jp.delta_k - jm.delta_k) / (2.0 * hj), q.gamma_kj),
            rel((kp.delta_j - km.delta_j) / (2.0 * hk), q.gamma_jk),
            rel((jp.delta_j - jm.delta_j) / (2.0 * hj), q.gamma_jj),
        ];
        out.max_fd_error = errors.iter().fold(out.max_fd_error, |m, e| m.max(*e));
        out.max_symmetry_error = out.max_symmetry_error.max((q.gamma_kj - q.gamma_jk).abs());
        let lambda = rng.random_range(0.5..2.0);
        let s = margrabe(&ExchangeInputs { s_k: lambda * p.s_k, s_j: lambda * p.s_j, ..p })?;
        let homogeneity = [
            rel(s.price, lambda * q.price),
            rel(s.delta_k, q.delta_k),
            rel(s.delta_j, q.delta_j),
            rel(lambda * s.gamma_kk, q.gamma_kk),
            rel(lambda * s.gamma_kj, q.gamma_kj),
            rel(lambda * s.gamma_jk, q.gamma_jk),
            rel(lambda * s.gamma_jj, q.gamma_jj),
        ];
        out.max_homogeneity_error = homogeneity.iter().fold(out.max_homogeneity_error, |m, e| m.max(*e));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_has_header_width() {
        let p = ExchangeInputs { s_k: 100.0, s_j: 100.0, ratio: 1.0, sigma_k: 0.2, sigma_j: 0.3, rho: 0.1, q_k: 0.0, q_j: 0.0, tau: 1.0 };
        let row = margrabe_row(&p).unwrap();
        assert_eq!(row.split(',').count(), MARGRABE_HEADER.split(',').count());
        assert!(row.starts_with("100,100,1,0.2,0.3,0.1,0,0,1,"));
    }

    #[test]
    fn small_check_passes() {
        assert!(margrabe_check(5, 1).unwrap().passed());
    }
}
