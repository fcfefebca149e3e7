//! Small dense row-major helpers. Everything here works on `&[f64]` slices
//! with explicit dimensions so the hot loops stay allocation free.

use crate::error::{Error, Result};

/// Pivot tolerance used by [`cholesky`].
pub const CHOLESKY_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a` for a symmetric `n×n` matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky expects {}×{} = {} entries, got {}",
            n,
            n,
            n * n,
            a.len()
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= CHOLESKY_TOL {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `u L = v` for the row vector `u`, with `L` lower triangular (`n×n`).
/// Equivalent to back substitution on `Lᵀ uᵀ = vᵀ`.
pub fn solve_row_lower(l: &[f64], n: usize, v: &[f64], u: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = v[i];
        for k in (i + 1)..n {
            s -= u[k] * l[k * n + i];
        }
        u[i] = s / l[i * n + i];
    }
}

/// Solves `L u = v` for the column vector `u`, with `L` lower triangular.
pub fn solve_col_lower(l: &[f64], n: usize, v: &[f64], u: &mut [f64]) {
    for i in 0..n {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i * n + k] * u[k];
        }
        u[i] = s / l[i * n + i];
    }
}

/// `c (m×n) = a (m×k) · b (k×n)`, overwriting `c`.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        ci.fill(0.0);
        let ai = &a[i * k..(i + 1) * k];
        for (p, &aip) in ai.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            for (cij, &bpj) in ci.iter_mut().zip(bp) {
                *cij += aip * bpj;
            }
        }
    }
}

/// `c (k×n) += aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let ai = &a[i * k..(i + 1) * k];
        let bi = &b[i * n..(i + 1) * n];
        for (p, &aip) in ai.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let cp = &mut c[p * n..(p + 1) * n];
            for (cpj, &bij) in cp.iter_mut().zip(bi) {
                *cpj += aip * bij;
            }
        }
    }
}

/// `c (m×k) = a (m×n) · bᵀ` where `b` is `k×n`.
pub fn matmul_a_bt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let ai = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            c[i * k + p] = ai.iter().zip(bp).map(|(x, y)| x * y).sum();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
