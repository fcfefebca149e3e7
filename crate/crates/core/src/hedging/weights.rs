//! Hedge weights: the first-order (delta) rule, the sparse second-order
//! system for instrument positions, and the finite-difference charm.

use super::instruments::Instrument;
use super::lsqr::{lsqr_solve, CooMatrix, LsqrOptions};
use crate::error::{Error, Result};
use crate::solver::GreekBatch;

/// Constraint carried by one row of the second-order system.
/// Indices are zero-based state components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    /// `Σ_k β_k ∂²_{li} u^k = Σ_j Gamma^j_{li}`.
    Gamma { i: usize, l: usize },
    /// `Σ_k β_k ∂_l u^k = Σ_j ∂_l v^j` for a non-tradeable component `l`.
    Vega { l: usize },
}

/// Sparse system `A β = b` for the instrument positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSystem {
    pub matrix: CooMatrix,
    pub rhs: Vec<f64>,
    pub rows: Vec<RowLabel>,
}

/// Instrument derivatives at one state: gradient `d`, Hessian `d×d`.
#[derive(Debug, Clone, Copy)]
pub struct LocalQuote<'a> {
    pub price: f64,
    pub grad: &'a [f64],
    pub hess: &'a [f64],
}

/// Summed portfolio Greeks of the active contracts at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioGreeks {
    /// `Σ_j ∂_i v^j`, width `d`.
    pub delta: Vec<f64>,
    /// `Σ_j ∂²_{il} v^j`, row-major `d×d`; zeros when unavailable.
    pub gamma: Vec<f64>,
}

impl PortfolioGreeks {
    /// Sums the Greeks of sample `s` over contracts with `active[c]`.
    pub fn collect(g: &GreekBatch, s: usize, active: &[bool]) -> Self {
        let d = g.d;
        let mut out = PortfolioGreeks { delta: vec![0.0; d], gamma: vec![0.0; d * d] };
        for (c, _) in active.iter().enumerate().filter(|(_, a)| **a) {
            for (acc, v) in out.delta.iter_mut().zip(g.delta_row(s, c)) {
                *acc += v;
            }
            if let Some(block) = g.gamma_block(s, c) {
                for (acc, v) in out.gamma.iter_mut().zip(block) {
                    *acc += v;
                }
            }
        }
        out
    }
}

/// `α = Σ_{j active} Delta^j` over the first `m` (tradeable) components.
pub fn delta_weights(g: &GreekBatch, s: usize, active: &[bool], m: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; m];
    for (c, _) in active.iter().enumerate().filter(|(_, a)| **a) {
        for (acc, v) in alpha.iter_mut().zip(g.delta_row(s, c)) {
            *acc += v;
        }
    }
    alpha
}

/// Builds the system for `rows`, storing only each instrument's structural nonzeros.
pub fn assemble_second_order(
    rows: &[RowLabel],
    instruments: &[Instrument],
    quotes: &[LocalQuote<'_>],
    target: &PortfolioGreeks,
    d: usize,
) -> Result<SecondOrderSystem> {
    if quotes.len() != instruments.len() {
        return Err(Error::ShapeMismatch(format!("{} quotes for {} instruments", quotes.len(), instruments.len())));
    }
    let mut matrix = CooMatrix::new(rows.len(), instruments.len());
    for (k, (inst, q)) in instruments.iter().zip(quotes).enumerate() {
        if !q.price.is_finite() || q.grad.iter().chain(q.hess).any(|v| !v.is_finite()) {
            return Err(Error::MissingQuote(k));
        }
        let grads = inst.gradient_support(d);
        let hess = inst.hessian_support(d);
        for (r, row) in rows.iter().enumerate() {
            match *row {
                RowLabel::Gamma { i, l } => {
                    if hess.contains(&(l, i)) {
                        matrix.push(r, k, q.hess[l * d + i])?;
                    }
                }
                RowLabel::Vega { l } => {
                    if grads.contains(&l) {
                        matrix.push(r, k, q.grad[l])?;
                    }
                }
            }
        }
    }
    let rhs = rows
        .iter()
        .map(|row| match *row {
            RowLabel::Gamma { i, l } => target.gamma[l * d + i],
            RowLabel::Vega { l } => target.delta[l],
        })
        .collect();
    Ok(SecondOrderSystem { matrix, rhs, rows: rows.to_vec() })
}

/// Asset and instrument positions of a second-order strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeWeights {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// `β` by least squares on the assembled system, then
/// `α_i = Σ_j Delta^j_i − Σ_k β_k ∂_i u^k` for tradeables `i < m`.
pub fn gamma_weights(
    rows: &[RowLabel],
    instruments: &[Instrument],
    quotes: &[LocalQuote<'_>],
    target: &PortfolioGreeks,
    m: usize,
    opts: &LsqrOptions,
) -> Result<HedgeWeights> {
    let d = target.delta.len();
    let sys = assemble_second_order(rows, instruments, quotes, target, d)?;
    let beta = lsqr_solve(&sys.matrix, &sys.rhs, opts)?.into_result()?;
    let mut alpha = target.delta[..m].to_vec();
    for (b, q) in beta.iter().zip(quotes) {
        for (a, g) in alpha.iter_mut().zip(q.grad) {
            *a -= b * g;
        }
    }
    Ok(HedgeWeights { alpha, beta })
}

/// Finite-difference charm `−(α_n − α_{n−1}) / Δt`, per asset.
pub fn charm_estimate(alpha_now: &[f64], alpha_prev: &[f64], dt: f64) -> Vec<f64> {
    alpha_now.iter().zip(alpha_prev).map(|(a, b)| -(a - b) / dt).collect()
}
