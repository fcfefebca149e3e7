//! Euler–Maruyama path ensembles. Path `p` draws its increments from its own
//! substream, so ensembles are identical whatever the path count or thread
//! count.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Model, ModelKind, TimeGrid};
use crate::error::Result;
use crate::rng::{self, Purpose};

/// Simulated states `[path][time][d]` and increments `[path][time][d]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub d: usize,
    pub seed: u64,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, n: usize) -> &[f64] {
        let off = (path * (self.grid.n_steps() + 1) + n) * self.d;
        &self.states[off..off + self.d]
    }

    /// Brownian increment `W_{t_{n+1}} − W_{t_n}`.
    pub fn increment(&self, path: usize, n: usize) -> &[f64] {
        let off = (path * self.grid.n_steps() + n) * self.d;
        &self.increments[off..off + self.d]
    }

    /// States of all paths at time index `n`, row-major `n_paths×d`.
    pub fn slice_at(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_paths * self.d);
        for p in 0..self.n_paths {
            out.extend_from_slice(self.state(p, n));
        }
        out
    }
}

/// Advances `x` by one Euler step with increment `dw`, writing into `out`.
/// `scratch` must hold `2d + d²` values.
pub fn euler_step(model: &Model, t: f64, dt: f64, x: &[f64], dw: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let d = model.d();
    let (mu, rest) = scratch.split_at_mut(d);
    let sigma = &mut rest[..d * d];
    model.drift(t, x, mu);
    model.diffusion(t, x, sigma);
    for i in 0..d {
        let mut s = x[i] + mu[i] * dt;
        for k in 0..d {
            s += sigma[i * d + k] * dw[k];
        }
        out[i] = s;
    }
    if model.kind() == ModelKind::Heston {
        for v in out.iter_mut() {
            *v = v.abs();
        }
    }
}

fn simulate_one(model: &Model, grid: &TimeGrid, steps: usize, rng: &mut ChaCha8Rng, states: &mut [f64], incs: &mut [f64]) {
    let d = model.d();
    let dt = grid.dt();
    let sq = dt.sqrt();
    let mut scratch = vec![0.0; 2 * d + d * d];
    states[..d].copy_from_slice(model.x0());
    for n in 0..steps {
        let dw = &mut incs[n * d..(n + 1) * d];
        for v in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sq * z;
        }
        let (head, tail) = states.split_at_mut((n + 1) * d);
        euler_step(model, grid.t(n), dt, &head[n * d..], dw, &mut tail[..d], &mut scratch);
    }
}

/// Simulates `n_paths` full paths on `grid`.
pub fn simulate_paths(model: &Model, grid: &TimeGrid, n_paths: usize, seed: u64) -> PathEnsemble {
    let d = model.d();
    let steps = grid.n_steps();
    let (states, increments) = simulate_batch(model, grid, steps, n_paths, |p| rng::stream(seed, Purpose::Paths, &[], p as u64));
    PathEnsemble { grid: *grid, n_paths, d, seed, states, increments }
}

/// Simulates `n_paths` paths over the first `steps` intervals, with the
/// generator for path `p` supplied by `rng_for(p)`. Returns states
/// `[path][0..=steps][d]` and increments `[path][0..steps][d]`.
pub fn simulate_batch<F>(model: &Model, grid: &TimeGrid, steps: usize, n_paths: usize, rng_for: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize) -> ChaCha8Rng + Sync,
{
    let d = model.d();
    let mut states = vec![0.0; n_paths * (steps + 1) * d];
    let mut increments = vec![0.0; n_paths * steps * d];
    if steps == 0 {
        for st in states.chunks_mut(d) {
            st.copy_from_slice(model.x0());
        }
        return (states, increments);
    }
    states
        .par_chunks_mut((steps + 1) * d)
        .zip(increments.par_chunks_mut(steps * d))
        .enumerate()
        .for_each(|(p, (st, inc))| {
            let mut rng = rng_for(p);
            simulate_one(model, grid, steps, &mut rng, st, inc);
        });
    (states, increments)
}

/// Debug dump with columns `path,step,t,x_1..x_d`.
pub fn write_paths_csv<W: Write>(ensemble: &PathEnsemble, mut w: W) -> Result<()> {
    write!(w, "path,step,t")?;
    for i in 1..=ensemble.d {
        write!(w, ",x_{i}")?;
    }
    writeln!(w)?;
    for p in 0..ensemble.n_paths {
        for n in 0..=ensemble.grid.n_steps() {
            write!(w, "{p},{n},{}", ensemble.grid.t(n))?;
            for v in ensemble.state(p, n) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
