//! Sparse least squares by Golub–Kahan bidiagonalization (LSQR, Paige and
//! Saunders). Started from zero, the iterates stay in the row space of `A`,
//! so rank-deficient and underdetermined systems converge to the
//! minimum-norm least-squares solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse matrix in coordinate form. Duplicate entries are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CooMatrix { rows, cols, entries: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Stored `(row, col, value)` triplets.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::ShapeMismatch(format!(
                "entry ({row}, {col}) outside a {}×{} matrix",
                self.rows, self.cols
            )));
        }
        self.entries.push((row, col, value));
        Ok(())
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.rows * self.cols];
        for &(i, k, v) in &self.entries {
            a[i * self.cols + k] += v;
        }
        a
    }

    /// `out = A x`.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(i, k, v) in &self.entries {
            out[i] += v * x[k];
        }
    }

    /// `out = Aᵀ y`.
    pub fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(i, k, v) in &self.entries {
            out[k] += v * y[i];
        }
    }
}

/// Stopping tolerances. `max_iter = None` means four times the column count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsqrOptions {
    pub atol: f64,
    pub btol: f64,
    pub max_iter: Option<usize>,
}

impl Default for LsqrOptions {
    fn default() -> Self {
        LsqrOptions { atol: 1e-10, btol: 1e-10, max_iter: None }
    }
}

/// Final iterate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqrSolution {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖b − A x‖₂`.
    pub residual_norm: f64,
}

impl LsqrSolution {
    /// The iterate, or [`Error::NoConvergence`] when no stopping test fired.
    pub fn into_result(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.x)
        } else {
            Err(Error::NoConvergence { iterations: self.iterations })
        }
    }
}

/// Euclidean norm, scaled so that tiny or huge entries neither underflow nor overflow.
fn norm(v: &[f64]) -> f64 {
    let big = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if big == 0.0 || !big.is_finite() {
        return big;
    }
    big * v.iter().map(|a| (a / big) * (a / big)).sum::<f64>().sqrt()
}

fn scale(v: &mut [f64], s: f64) {
    for a in v.iter_mut() {
        *a *= s;
    }
}

/// Minimizes `‖A x − b‖₂`, returning the minimum-norm minimizer.
pub fn lsqr_solve(a: &CooMatrix, b: &[f64], opts: &LsqrOptions) -> Result<LsqrSolution> {
    if b.len() != a.rows {
        return Err(Error::ShapeMismatch(format!("rhs has {} entries for {} rows", b.len(), a.rows)));
    }
    let (m, n) = (a.rows, a.cols);
    let max_iter = opts.max_iter.unwrap_or(4 * n);
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let done = |x: Vec<f64>, iterations, residual_norm| Ok(LsqrSolution { x, converged: true, iterations, residual_norm });
    if n == 0 || bnorm == 0.0 {
        return done(x, 0, bnorm);
    }

    let mut u = b.to_vec();
    let mut beta = bnorm;
    scale(&mut u, 1.0 / beta);
    let mut v = vec![0.0; n];
    a.mul_t(&u, &mut v);
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        return done(x, 0, bnorm);
    }
    scale(&mut v, 1.0 / alpha);
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm_sq = 0.0;
    let mut au = vec![0.0; m];
    let mut atv = vec![0.0; n];

    for itn in 1..=max_iter {
        a.mul(&v, &mut au);
        for (ui, ai) in u.iter_mut().zip(&au) {
            *ui = ai - alpha * *ui;
        }
        beta = norm(&u);
        if beta > 0.0 {
            scale(&mut u, 1.0 / beta);
            anorm_sq += alpha * alpha + beta * beta;
            a.mul_t(&u, &mut atv);
            for (vi, ai) in v.iter_mut().zip(&atv) {
                *vi = ai - beta * *vi;
            }
            alpha = norm(&v);
            if alpha > 0.0 {
                scale(&mut v, 1.0 / alpha);
            }
        } else {
            anorm_sq += alpha * alpha;
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        for k in 0..n {
            x[k] += t1 * w[k];
            w[k] = v[k] + t2 * w[k];
        }

        let rnorm = phibar;
        let arnorm = alpha * c.abs() * phibar;
        let anorm = anorm_sq.sqrt();
        let xnorm = norm(&x);
        let consistent = rnorm <= opts.btol * bnorm + opts.atol * anorm * xnorm;
        let normal = rnorm == 0.0 || arnorm <= opts.atol * anorm * rnorm;
        if consistent || normal {
            return done(x, itn, rnorm);
        }
        if itn == max_iter {
            return Ok(LsqrSolution { x, converged: false, iterations: itn, residual_norm: rnorm });
        }
    }
    Ok(LsqrSolution { x, converged: false, iterations: max_iter, residual_norm: phibar })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, cols: usize, vals: &[f64]) -> CooMatrix {
        let mut a = CooMatrix::new(rows, cols);
        for i in 0..rows {
            for k in 0..cols {
                let v = vals[i * cols + k];
                if v != 0.0 {
                    a.push(i, k, v).unwrap();
                }
            }
        }
        a
    }

    fn solve(a: &CooMatrix, b: &[f64]) -> Vec<f64> {
        lsqr_solve(a, b, &LsqrOptions::default()).unwrap().into_result().unwrap()
    }

    #[test]
    fn identity_system() {
        let a = dense(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = solve(&a, &[1.0, 2.0, 3.0]);
        for (xi, e) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_overdetermined_system() {
        let a = dense(2, 1, &[1.0, 1.0]);
        let x = solve(&a, &[0.0, 2.0]);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_system_gives_min_norm() {
        let a = dense(1, 2, &[1.0, 1.0]);
        let x = solve(&a, &[2.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = dense(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let sol = lsqr_solve(&a, &[0.0, 0.0], &LsqrOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_system_gives_zero() {
        let a = CooMatrix::new(0, 3);
        let sol = lsqr_solve(&a, &[], &LsqrOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x, vec![0.0; 3]);
    }

    #[test]
    fn tiny_rhs_does_not_underflow() {
        let a = dense(1, 1, &[1.1e-3]);
        let x = solve(&a, &[1.4e-161]);
        assert!((x[0] / (1.4e-161 / 1.1e-3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        let mut a = CooMatrix::new(1, 1);
        assert!(a.push(1, 0, 1.0).is_err());
    }
}
