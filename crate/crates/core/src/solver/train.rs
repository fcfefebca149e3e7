//! Backward training loops. Every SGD iteration simulates a fresh batch of
//! paths from `x0` to `t_{n+1}`; step `n+1` networks (or the terminal
//! closed forms) supply the regression targets.

use std::time::Instant;

use super::artifact::{SolverArtifact, StepLoss, StepNets};
use super::losses::{loss_rdbdp, loss_y, loss_z, LossEval, RdbdpInputs, YLossInputs, ZLossInputs};
use super::{Scheme, TrainConfig};
use crate::contracts::{driver_coefficients, exercise_triggered, exercise_z, PortfolioSpec};
use crate::error::{Error, Result};
use crate::market::{malliavin_step, simulate_batch, Model, TimeGrid};
use crate::nn::{Adam, Mlp, MlpSpec, Scaling};
use crate::rng::{self, Purpose};

/// One simulated transition `X_n → X_{n+1}` per sample.
struct Transition {
    x_now: Vec<f64>,
    x_next: Vec<f64>,
    dw: Vec<f64>,
}

fn sample_transition(model: &Model, grid: &TimeGrid, n: usize, batch: usize, seed: u64, purpose: Purpose, iter: usize) -> Transition {
    let d = model.d();
    let keys = [n as u64, iter as u64];
    let (states, incs) = simulate_batch(model, grid, n + 1, batch, |p| rng::stream(seed, purpose, &keys, p as u64));
    let stride = (n + 2) * d;
    let mut t = Transition { x_now: vec![0.0; batch * d], x_next: vec![0.0; batch * d], dw: vec![0.0; batch * d] };
    for p in 0..batch {
        let path = &states[p * stride..(p + 1) * stride];
        t.x_now[p * d..(p + 1) * d].copy_from_slice(&path[n * d..(n + 1) * d]);
        t.x_next[p * d..(p + 1) * d].copy_from_slice(&path[(n + 1) * d..(n + 2) * d]);
        let o = p * (n + 1) * d + n * d;
        t.dw[p * d..(p + 1) * d].copy_from_slice(&incs[o..o + d]);
    }
    t
}

const CALIBRATION_BATCH: usize = 4096;

struct Calibration {
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    z_mean: Vec<f64>,
    z_std: Vec<f64>,
}

/// Column means and standard deviations of a row-major sample; degenerate
/// columns get unit scale.
fn moments(data: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = (data.len() / width) as f64;
    let mut mean = vec![0.0; width];
    let mut var = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / rows;
        }
    }
    for row in data.chunks_exact(width) {
        for k in 0..width {
            var[k] += (row[k] - mean[k]).powi(2) / rows;
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(v, m): (&f64, &f64)| {
            let s = v.sqrt();
            if s > 1e-8 * (1.0 + m.abs()) {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    model: Model,
    grid: TimeGrid,
    portfolio: &'a PortfolioSpec,
    art: SolverArtifact,
}

fn check(eval: &LossEval, step: usize, phase: &'static str) -> Result<()> {
    if eval.loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step, phase, loss: eval.loss })
    }
}

/// Mean of the losses recorded over the last tenth of a phase.
fn tail_mean(losses: &[f64]) -> f64 {
    let k = (losses.len() / 10).max(1);
    let tail = &losses[losses.len() - k..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

impl<'a> Trainer<'a> {
    fn spec(&self, out: usize) -> MlpSpec {
        MlpSpec {
            input_dim: self.model.d(),
            hidden_layers: self.cfg.hidden_layers,
            hidden_width: self.cfg.hidden_width,
            output_dim: out,
            batch_norm: self.cfg.batch_norm,
        }
    }

    /// Fresh Glorot networks at the last step, transferred copies of step `n+1` otherwise.
    fn initial_nets(&self, n: usize, with_gamma: bool) -> Result<StepNets> {
        let (d, j) = (self.model.d(), self.portfolio.j());
        if let Some(next) = self.art.step(n + 1) {
            return Ok(StepNets { y: next.y.transfer(), z: next.z.transfer(), gamma: next.gamma.as_ref().map(Mlp::transfer) });
        }
        let cal = self.calibrate(n)?;
        let init = |role: u64, out: usize, out_moments: (Vec<f64>, Vec<f64>)| -> Result<Mlp> {
            let mut net = Mlp::new(self.spec(out), &mut rng::stream(self.cfg.seed, Purpose::Init, &[role], 0))?;
            let (output_shift, output_scale) = out_moments;
            net.set_scaling(Scaling { input_shift: cal.x_mean.clone(), input_scale: cal.x_std.clone(), output_shift, output_scale })?;
            Ok(net)
        };
        let gamma_scale: Vec<f64> = (0..j * d * d).map(|i| cal.z_std[i / d] / cal.x_std[i % d]).collect();
        Ok(StepNets {
            y: init(0, j, (cal.y_mean, cal.y_std))?,
            z: init(1, j * d, (cal.z_mean, cal.z_std.clone()))?,
            gamma: if with_gamma { Some(init(2, j * d * d, (vec![0.0; j * d * d], gamma_scale))?) } else { None },
        })
    }

    /// Moments of the inputs at `t_n` and of the targets at `t_{n+1}` on a calibration batch.
    fn calibrate(&self, n: usize) -> Result<Calibration> {
        let size = self.cfg.batch.max(CALIBRATION_BATCH);
        let tr = sample_transition(&self.model, &self.grid, n, size, self.cfg.seed, Purpose::Init, usize::MAX);
        let next = self.art.evaluate_values(n + 1, &tr.x_next)?;
        let (x_mean, x_std) = moments(&tr.x_now, self.model.d());
        let (y_mean, y_std) = moments(&next.y, self.portfolio.j());
        let (z_mean, z_std) = moments(&next.z, self.portfolio.j() * self.model.d());
        Ok(Calibration { x_mean, x_std, y_mean, y_std, z_mean, z_std })
    }

    fn rate(&self, n: usize, iter: usize) -> f64 {
        // At n = 0 every input equals x0, so batch normalization collapses the
        // transferred function to a constant and the step restarts from scratch.
        let fresh = n + 1 == self.grid.n_steps() || n == 0;
        let schedule = if fresh { &self.cfg.schedule } else { &self.cfg.transfer_schedule };
        schedule.rate(iter, self.budget(n))
    }

    fn budget(&self, n: usize) -> usize {
        if n + 1 == self.grid.n_steps() {
            self.cfg.iters_last
        } else {
            self.cfg.iters
        }
    }

    fn run(mut self) -> Result<SolverArtifact> {
        let clock = Instant::now();
        for n in (0..self.grid.n_steps()).rev() {
            let (nets, loss) = match self.cfg.scheme {
                Scheme::Osm => self.osm_step(n)?,
                Scheme::Rdbdp => self.rdbdp_step(n)?,
            };
            self.art.set_step(n, nets, loss);
        }
        self.art.finish(clock.elapsed().as_secs_f64());
        Ok(self.art)
    }

    /// Driver coefficient `a(X)` per sample, `B×d`.
    fn drift_coeffs(&self, t: f64, states: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.d();
        let mut a = vec![0.0; states.len()];
        let mut da = vec![0.0; d * d];
        for (x, out) in states.chunks(d).zip(a.chunks_mut(d)) {
            driver_coefficients(&self.model, t, x, out, &mut da)?;
        }
        Ok(a)
    }

    /// Inputs of the `Z`/`Γ` loss: `σ(t_n, X_n)`, the Malliavin target and `∇_z f` at `t_{n+1}`.
    fn z_targets(&self, n: usize, tr: &Transition) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (d, j) = (self.model.d(), self.portfolio.j());
        let dd = d * d;
        let batch = tr.x_now.len() / d;
        let (t_now, t_next, dt) = (self.grid.t(n), self.grid.t(n + 1), self.grid.dt());
        let next = self.art.evaluate_values(n + 1, &tr.x_next)?;
        let mut sigma = vec![0.0; batch * dd];
        let mut target = vec![0.0; batch * j * d];
        let mut grad_z = vec![0.0; batch * j * d];
        let mut dxn1 = vec![0.0; dd];
        let mut prop = vec![0.0; dd];
        let mut a = vec![0.0; d];
        let mut da = vec![0.0; dd];
        let mut delta = vec![0.0; j * d];
        let mut delta_tilde = vec![0.0; j * d];
        let r = self.model.r();
        for s in 0..batch {
            let x = &tr.x_now[s * d..(s + 1) * d];
            let xn = &tr.x_next[s * d..(s + 1) * d];
            malliavin_step(&self.model, t_now, dt, x, &tr.dw[s * d..(s + 1) * d], &mut sigma[s * dd..(s + 1) * dd], &mut dxn1, &mut prop);
            let rows = s * j * d..(s + 1) * j * d;
            self.model.apply_sigma_inverse(t_next, xn, &next.z[rows.clone()], j, &mut delta)?;
            self.model.apply_sigma_inverse(t_next, xn, &next.z_tilde[rows.clone()], j, &mut delta_tilde)?;
            driver_coefficients(&self.model, t_next, xn, &mut a, &mut da)?;
            for c in 0..j {
                let zc = &next.z[rows.start + c * d..rows.start + (c + 1) * d];
                let out = &mut target[rows.start + c * d..rows.start + (c + 1) * d];
                for l in 0..d {
                    // ∂_l f = Σ_k z_k ∂_l a_k
                    let fx_l: f64 = (0..d).map(|k| zc[k] * da[k * d + l]).sum();
                    for m in 0..d {
                        let dx = dxn1[l * d + m];
                        out[m] += (delta[c * d + l] - dt * r * delta_tilde[c * d + l]) * dx + dt * fx_l * dx;
                    }
                }
                grad_z[rows.start + c * d..rows.start + (c + 1) * d].copy_from_slice(&a);
            }
        }
        Ok((sigma, target, grad_z))
    }

    fn osm_step(&self, n: usize) -> Result<(StepNets, StepLoss)> {
        let (d, j) = (self.model.d(), self.portfolio.j());
        let cfg = self.cfg;
        let budget = self.budget(n);
        let mut nets = self.initial_nets(n, true)?;
        let mut gamma_net = nets.gamma.take().expect("osm step has a gamma network");

        let mut adam_z = Adam::new(nets.z.n_params());
        let mut adam_g = Adam::new(gamma_net.n_params());
        let mut z_losses = Vec::with_capacity(budget);
        for iter in 0..budget {
            let tr = sample_transition(&self.model, &self.grid, n, cfg.batch, cfg.seed, Purpose::TrainZ, iter);
            let (sigma, target, grad_z) = self.z_targets(n, &tr)?;
            let (psi, cache_z) = nets.z.forward_train(&tr.x_now)?;
            let (chi, cache_g) = gamma_net.forward_train(&tr.x_now)?;
            let inp = ZLossInputs { batch: cfg.batch, j, d, dt: self.grid.dt(), dw: &tr.dw, sigma: &sigma, target: &target, grad_z: &grad_z };
            let eval = loss_z(&inp, &psi, &chi);
            check(&eval, n, "z")?;
            let lr = self.rate(n, iter);
            let gz = nets.z.backward(&cache_z, &eval.grads[0]);
            let gg = gamma_net.backward(&cache_g, &eval.grads[1]);
            adam_z.step(&mut nets.z.params, &gz, lr);
            adam_g.step(&mut gamma_net.params, &gg, lr);
            z_losses.push(eval.loss);
        }
        nets.z.stats_frozen = true;
        gamma_net.stats_frozen = true;

        let mut adam_y = Adam::new(nets.y.n_params());
        let mut y_losses = Vec::with_capacity(budget);
        let (t_now, t_next, dt) = (self.grid.t(n), self.grid.t(n + 1), self.grid.dt());
        let m = self.model.m();
        let r = self.model.r();
        for iter in 0..budget {
            let tr = sample_transition(&self.model, &self.grid, n, cfg.batch, cfg.seed, Purpose::TrainY, iter);
            let next = self.art.evaluate_values(n + 1, &tr.x_next)?;
            let a_next = self.drift_coeffs(t_next, &tr.x_next)?;
            let a_now = self.drift_coeffs(t_now, &tr.x_now)?;
            let mut z_hat = nets.z.infer(&tr.x_now)?;
            let (phi, cache) = nets.y.forward_train(&tr.x_now)?;
            let mut f_next = vec![0.0; cfg.batch * j];
            let mut z_drift = vec![0.0; cfg.batch * j];
            let mut z_dw = vec![0.0; cfg.batch * j];
            for s in 0..cfg.batch {
                let x = &tr.x_now[s * d..(s + 1) * d];
                for (c, contract) in self.portfolio.contracts.iter().enumerate() {
                    let i = s * j + c;
                    let zr = i * d..(i + 1) * d;
                    let zf_next: f64 = next.z[zr.clone()].iter().zip(&a_next[s * d..(s + 1) * d]).map(|(p, q)| p * q).sum();
                    f_next[i] = -r * next.y_tilde[i] + zf_next;
                    if exercise_triggered(contract, &self.grid, n, x, m, phi[i]) {
                        exercise_z(contract, &self.model, t_now, x, &mut z_hat[zr.clone()]);
                    }
                    let zh = &z_hat[zr];
                    z_drift[i] = zh.iter().zip(&a_now[s * d..(s + 1) * d]).map(|(p, q)| p * q).sum();
                    z_dw[i] = zh.iter().zip(&tr.dw[s * d..(s + 1) * d]).map(|(p, q)| p * q).sum();
                }
            }
            let inp = YLossInputs { batch: cfg.batch, j, dt, theta_y: cfg.theta_y, r, y_next: &next.y, f_next: &f_next, z_drift: &z_drift, z_dw: &z_dw };
            let eval = loss_y(&inp, &phi);
            check(&eval, n, "y")?;
            let g = nets.y.backward(&cache, &eval.grads[0]);
            adam_y.step(&mut nets.y.params, &g, self.rate(n, iter));
            y_losses.push(eval.loss);
        }
        nets.y.stats_frozen = true;
        nets.gamma = Some(gamma_net);
        Ok((nets, StepLoss { step: n, loss_z: tail_mean(&z_losses), loss_y: tail_mean(&y_losses) }))
    }

    fn rdbdp_step(&self, n: usize) -> Result<(StepNets, StepLoss)> {
        let (d, j) = (self.model.d(), self.portfolio.j());
        let cfg = self.cfg;
        let budget = self.budget(n);
        let mut nets = self.initial_nets(n, false)?;
        let mut adam_y = Adam::new(nets.y.n_params());
        let mut adam_z = Adam::new(nets.z.n_params());
        let mut losses = Vec::with_capacity(budget);
        for iter in 0..budget {
            let tr = sample_transition(&self.model, &self.grid, n, cfg.batch, cfg.seed, Purpose::TrainY, iter);
            let next = self.art.evaluate_values(n + 1, &tr.x_next)?;
            let a_now = self.drift_coeffs(self.grid.t(n), &tr.x_now)?;
            let (phi, cache_y) = nets.y.forward_train(&tr.x_now)?;
            let (psi, cache_z) = nets.z.forward_train(&tr.x_now)?;
            let inp = RdbdpInputs { batch: cfg.batch, j, d, dt: self.grid.dt(), r: self.model.r(), y_next: &next.y, drift_coeff: &a_now, dw: &tr.dw };
            let eval = loss_rdbdp(&inp, &phi, &psi);
            check(&eval, n, "y")?;
            let lr = self.rate(n, iter);
            let gy = nets.y.backward(&cache_y, &eval.grads[0]);
            let gz = nets.z.backward(&cache_z, &eval.grads[1]);
            adam_y.step(&mut nets.y.params, &gy, lr);
            adam_z.step(&mut nets.z.params, &gz, lr);
            losses.push(eval.loss);
        }
        nets.y.stats_frozen = true;
        nets.z.stats_frozen = true;
        let tail = tail_mean(&losses);
        Ok((nets, StepLoss { step: n, loss_z: tail, loss_y: tail }))
    }
}

/// Trains the scheme selected in `cfg`.
pub fn train(portfolio: &PortfolioSpec, grid: TimeGrid, cfg: &TrainConfig) -> Result<SolverArtifact> {
    cfg.validate()?;
    let model = portfolio.validate(&grid)?;
    let art = SolverArtifact::empty(cfg.scheme, grid, portfolio.clone(), model.clone(), cfg.clone());
    Trainer { cfg, model, grid, portfolio, art }.run()
}

/// One Step Malliavin training (`Z`/`Γ` regression, then the price regression, per step).
pub fn osm_train(portfolio: &PortfolioSpec, grid: TimeGrid, cfg: &TrainConfig) -> Result<SolverArtifact> {
    train(portfolio, grid, &TrainConfig { scheme: Scheme::Osm, ..cfg.clone() })
}

/// RDBDP baseline training (joint price and `Z` regression, per step).
pub fn rdbdp_train(portfolio: &PortfolioSpec, grid: TimeGrid, cfg: &TrainConfig) -> Result<SolverArtifact> {
    train(portfolio, grid, &TrainConfig { scheme: Scheme::Rdbdp, ..cfg.clone() })
}
