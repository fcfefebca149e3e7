//! One-step Malliavin derivatives along simulated paths:
//! `D_n X_n = σ(t_n, X_n)` and `D_n X_{n+1} = (I + Δt ∇μ + Σ_k ΔW^k ∇σ^k) D_n X_n`.

use rayon::prelude::*;

use super::{Model, PathEnsemble};
use crate::linalg;

/// Per path and step, the `d×d` blocks `D_n X_n` and `D_n X_{n+1}`.
#[derive(Debug, Clone)]
pub struct MalliavinEnsemble {
    pub n_paths: usize,
    pub n_steps: usize,
    pub d: usize,
    current: Vec<f64>,
    next: Vec<f64>,
}

impl MalliavinEnsemble {
    fn offset(&self, path: usize, n: usize) -> usize {
        (path * self.n_steps + n) * self.d * self.d
    }

    /// `D_n X_n`.
    pub fn current(&self, path: usize, n: usize) -> &[f64] {
        let o = self.offset(path, n);
        &self.current[o..o + self.d * self.d]
    }

    /// `D_n X_{n+1}`.
    pub fn next(&self, path: usize, n: usize) -> &[f64] {
        let o = self.offset(path, n);
        &self.next[o..o + self.d * self.d]
    }
}

/// Writes `σ(t_n, x)` into `dxn` and `D_n X_{n+1}` into `dxn1`. `prop` is a `d×d` scratch block.
pub fn malliavin_step(model: &Model, t: f64, dt: f64, x: &[f64], dw: &[f64], dxn: &mut [f64], dxn1: &mut [f64], prop: &mut [f64]) {
    let d = model.d();
    model.diffusion(t, x, dxn);
    model.malliavin_propagator(t, x, dt, dw, prop);
    linalg::matmul(prop, dxn, dxn1, d, d, d);
}

pub fn simulate_malliavin(model: &Model, paths: &PathEnsemble) -> MalliavinEnsemble {
    let d = model.d();
    let steps = paths.grid.n_steps();
    let dt = paths.grid.dt();
    let block = steps * d * d;
    let mut current = vec![0.0; paths.n_paths * block];
    let mut next = vec![0.0; paths.n_paths * block];
    current
        .par_chunks_mut(block)
        .zip(next.par_chunks_mut(block))
        .enumerate()
        .for_each(|(p, (cur, nxt))| {
            let mut prop = vec![0.0; d * d];
            for n in 0..steps {
                let r = n * d * d..(n + 1) * d * d;
                malliavin_step(
                    model,
                    paths.grid.t(n),
                    dt,
                    paths.state(p, n),
                    paths.increment(p, n),
                    &mut cur[r.clone()],
                    &mut nxt[r],
                    &mut prop,
                );
            }
        });
    MalliavinEnsemble { n_paths: paths.n_paths, n_steps: steps, d, current, next }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, ModelSpec, TimeGrid};

    #[test]
    fn hand_step_one_dimensional() {
        let m = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0).build().unwrap();
        let (mut a, mut b, mut p) = ([0.0], [0.0], [0.0]);
        malliavin_step(&m, 0.0, 0.01, &[100.0], &[0.1], &mut a, &mut b, &mut p);
        assert_eq!(a[0], 25.0);
        assert!((b[0] - 25.625).abs() < 1e-12);
    }

    #[test]
    fn current_block_is_diffusion_and_zero_vol_is_static() {
        let m = ModelSpec::black_scholes_uniform(2, 100.0, 0.0, 0.0, 0.0, 0.0, 0.5).build().unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_paths(&m, &g, 3, 5);
        let mall = simulate_malliavin(&m, &e);
        for p in 0..3 {
            for n in 0..4 {
                assert_eq!(mall.current(p, n), mall.next(p, n));
                assert!(mall.current(p, n).iter().all(|&v| v == 0.0));
            }
        }
    }

    /// For 1-d Black–Scholes the one-step derivative equals `σ̄ X_{n+1}` scaled by
    /// the ratio of the Euler factors, which here is exactly `σ̄ X_{n+1}`.
    #[test]
    fn one_dimensional_bs_ratio_is_exact() {
        let m = ModelSpec::black_scholes_uniform(1, 100.0, 0.07, 0.3, 0.0, 0.0, 0.0).build().unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        let e = simulate_paths(&m, &g, 20, 8);
        let mall = simulate_malliavin(&m, &e);
        for p in 0..20 {
            for n in 0..10 {
                assert!((mall.current(p, n)[0] - 0.3 * e.state(p, n)[0]).abs() < 1e-12);
                assert!((mall.next(p, n)[0] - 0.3 * e.state(p, n + 1)[0]).abs() < 1e-10);
            }
        }
    }
}
