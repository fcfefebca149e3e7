//! Trained solver artifact: per-step networks, Greek evaluation and the
//! on-disk layout (`manifest.json` plus one binary file per network).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Scheme, TrainConfig};
use crate::contracts::{reflect_y, reflect_z, PortfolioSpec};
use crate::error::{Error, Result};
use crate::market::{Model, TimeGrid};
use crate::nn::{load_net, net_file_name, save_net, Mlp, NetRole};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

/// Networks of one time step. `gamma` is absent for RDBDP.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNets {
    pub y: Mlp,
    pub z: Mlp,
    pub gamma: Option<Mlp>,
}

/// Final training losses of one step, averaged over the last tenth of the iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub loss_z: f64,
    pub loss_y: f64,
}

/// Greeks of `J` contracts at a batch of `B` states on one grid date.
///
/// Layouts: `B×J` for prices, `B×J×d` for `Z` rows and deltas,
/// `B×J×d×d` for `Γ̂` and gammas.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekBatch {
    pub batch: usize,
    pub j: usize,
    pub d: usize,
    pub y_tilde: Vec<f64>,
    pub y: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma_hat: Option<Vec<f64>>,
    pub delta: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
}

impl GreekBatch {
    pub fn delta_row(&self, s: usize, c: usize) -> &[f64] {
        let o = (s * self.j + c) * self.d;
        &self.delta[o..o + self.d]
    }

    pub fn gamma_block(&self, s: usize, c: usize) -> Option<&[f64]> {
        let dd = self.d * self.d;
        let o = (s * self.j + c) * dd;
        self.gamma.as_ref().map(|g| &g[o..o + dd])
    }
}

/// Trained solver for one portfolio on one grid.
#[derive(Debug, Clone)]
pub struct SolverArtifact {
    scheme: Scheme,
    grid: TimeGrid,
    portfolio: PortfolioSpec,
    model: Model,
    config: TrainConfig,
    steps: Vec<Option<StepNets>>,
    losses: Vec<StepLoss>,
    wall_time_secs: f64,
}

#[derive(Serialize)]
struct ManifestCore<'a> {
    format: u32,
    scheme: Scheme,
    grid: TimeGrid,
    portfolio: &'a PortfolioSpec,
    portfolio_hash: String,
    train: &'a TrainConfig,
    losses: &'a [StepLoss],
    networks: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    scheme: Scheme,
    grid: TimeGrid,
    portfolio: PortfolioSpec,
    portfolio_hash: String,
    train: TrainConfig,
    losses: Vec<StepLoss>,
    networks: Vec<String>,
    wall_time_secs: f64,
    content_hash: String,
}

/// SHA-256 of the canonical JSON form of a portfolio.
pub fn portfolio_hash(portfolio: &PortfolioSpec) -> String {
    let json = serde_json::to_vec(portfolio).expect("portfolio serializes");
    hex::encode(Sha256::digest(json))
}

impl SolverArtifact {
    pub(crate) fn empty(scheme: Scheme, grid: TimeGrid, portfolio: PortfolioSpec, model: Model, config: TrainConfig) -> Self {
        let n = grid.n_steps();
        SolverArtifact { scheme, grid, portfolio, model, config, steps: vec![None; n], losses: Vec::new(), wall_time_secs: 0.0 }
    }

    pub(crate) fn set_step(&mut self, n: usize, nets: StepNets, loss: StepLoss) {
        self.steps[n] = Some(nets);
        self.losses.push(loss);
    }

    pub(crate) fn finish(&mut self, wall_time_secs: f64) {
        self.losses.sort_by_key(|l| l.step);
        self.wall_time_secs = wall_time_secs;
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn portfolio(&self) -> &PortfolioSpec {
        &self.portfolio
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn losses(&self) -> &[StepLoss] {
        &self.losses
    }

    pub fn wall_time_secs(&self) -> f64 {
        self.wall_time_secs
    }

    pub fn step(&self, n: usize) -> Option<&StepNets> {
        self.steps.get(n).and_then(|s| s.as_ref())
    }

    /// True when the artifact carries second-order (`Γ`) networks.
    pub fn has_gamma(&self) -> bool {
        self.scheme == Scheme::Osm
    }

    /// Greeks at grid index `n` for states `B×d`, including deltas and, for OSM, gammas.
    pub fn evaluate(&self, n: usize, states: &[f64]) -> Result<GreekBatch> {
        self.eval(n, states, true)
    }

    /// Prices and `Z` rows only (no deltas or gammas).
    pub fn evaluate_values(&self, n: usize, states: &[f64]) -> Result<GreekBatch> {
        self.eval(n, states, false)
    }

    /// Time-zero prices `Ŷ_0`, one per contract.
    pub fn initial_prices(&self) -> Result<Vec<f64>> {
        Ok(self.eval(0, self.model.x0(), false)?.y)
    }

    fn eval(&self, n: usize, states: &[f64], full: bool) -> Result<GreekBatch> {
        let d = self.model.d();
        let j = self.portfolio.j();
        let steps = self.grid.n_steps();
        if n > steps {
            return Err(Error::Domain(format!("time index {n} exceeds the grid ({steps} steps)")));
        }
        if states.is_empty() || states.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("{} state entries for dimension {d}", states.len())));
        }
        let batch = states.len() / d;
        if n == steps {
            return self.terminal(states, batch, full);
        }
        let nets = self.step(n).ok_or_else(|| Error::Incompatible(format!("no networks for time step {n}")))?;
        let y_tilde = nets.y.infer(states)?;
        let z_tilde = nets.z.infer(states)?;
        let gamma_hat = match (&nets.gamma, full) {
            (Some(g), true) => Some(g.infer(states)?),
            _ => None,
        };
        let mut y = y_tilde.clone();
        let mut z = z_tilde.clone();
        let m = self.model.m();
        for s in 0..batch {
            let x = &states[s * d..(s + 1) * d];
            for (c, contract) in self.portfolio.contracts.iter().enumerate() {
                let i = s * j + c;
                y[i] = reflect_y(contract, &self.grid, n, x, m, y_tilde[i]);
                reflect_z(contract, &self.model, &self.grid, n, x, y_tilde[i], &mut z[i * d..(i + 1) * d]);
            }
        }
        let mut out = GreekBatch { batch, j, d, y_tilde, y, z_tilde, z, gamma_hat, delta: Vec::new(), gamma: None };
        if full {
            self.recover(n, states, &mut out)?;
        }
        Ok(out)
    }

    /// Delta `= Z σ⁻¹` and Gamma `= σ⁻ᵀ(Γ̂ − Delta ∇σ)`.
    fn recover(&self, n: usize, states: &[f64], out: &mut GreekBatch) -> Result<()> {
        let (d, j) = (out.d, out.j);
        let t = self.grid.t(n);
        let model = &self.model;
        let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..out.batch)
            .into_par_iter()
            .map(|s| {
                let x = &states[s * d..(s + 1) * d];
                let mut delta = vec![0.0; j * d];
                model.apply_sigma_inverse(t, x, &out.z[s * j * d..(s + 1) * j * d], j, &mut delta)?;
                let mut gamma = Vec::new();
                if let Some(gh) = &out.gamma_hat {
                    gamma = vec![0.0; j * d * d];
                    let mut corr = vec![0.0; d * d];
                    for c in 0..j {
                        let o = (s * j + c) * d * d;
                        model.delta_dsigma(t, x, &delta[c * d..(c + 1) * d], &mut corr);
                        for (k, v) in corr.iter_mut().enumerate() {
                            *v = gh[o + k] - *v;
                        }
                        model.solve_sigma_transpose(t, x, &corr, &mut gamma[c * d * d..(c + 1) * d * d])?;
                    }
                }
                Ok((delta, gamma))
            })
            .collect::<Result<_>>()?;
        out.delta = per_sample.iter().flat_map(|p| p.0.iter().copied()).collect();
        if out.gamma_hat.is_some() {
            out.gamma = Some(per_sample.iter().flat_map(|p| p.1.iter().copied()).collect());
        }
        Ok(())
    }

    /// Closed forms at maturity: `Y = g`, `Z = ∇g σ`, `Γ̂ = σᵀ ∇²g + ∇g ∇σ`.
    fn terminal(&self, states: &[f64], batch: usize, full: bool) -> Result<GreekBatch> {
        let d = self.model.d();
        let m = self.model.m();
        let j = self.portfolio.j();
        let t = self.grid.horizon();
        let mut y = vec![0.0; batch * j];
        let mut z = vec![0.0; batch * j * d];
        let mut delta = vec![0.0; batch * j * d];
        let mut hess = vec![0.0; batch * j * d * d];
        let mut gamma_hat = vec![0.0; batch * j * d * d];
        let mut sigma = vec![0.0; d * d];
        let mut corr = vec![0.0; d * d];
        for s in 0..batch {
            let x = &states[s * d..(s + 1) * d];
            self.model.diffusion(t, x, &mut sigma);
            for (c, contract) in self.portfolio.contracts.iter().enumerate() {
                let i = s * j + c;
                y[i] = contract.payoff.value(x, m);
                let grad = &mut delta[i * d..(i + 1) * d];
                contract.payoff.gradient(x, m, grad);
                for k in 0..d {
                    z[i * d + k] = (0..d).map(|l| grad[l] * sigma[l * d + k]).sum();
                }
                if full {
                    let h = &mut hess[i * d * d..(i + 1) * d * d];
                    contract.payoff.hessian(x, m, d, h);
                    self.model.delta_dsigma(t, x, grad, &mut corr);
                    let gh = &mut gamma_hat[i * d * d..(i + 1) * d * d];
                    for k in 0..d {
                        for l in 0..d {
                            gh[k * d + l] = (0..d).map(|p| sigma[p * d + k] * h[p * d + l]).sum::<f64>() + corr[k * d + l];
                        }
                    }
                }
            }
        }
        let second = full && self.has_gamma();
        Ok(GreekBatch {
            batch,
            j,
            d,
            y_tilde: y.clone(),
            y,
            z_tilde: z.clone(),
            z,
            gamma_hat: second.then_some(gamma_hat),
            delta: if full { delta } else { Vec::new() },
            gamma: second.then_some(hess),
        })
    }

    fn roles(&self) -> Vec<NetRole> {
        match self.scheme {
            Scheme::Osm => vec![NetRole::Y, NetRole::Z, NetRole::Gamma],
            Scheme::Rdbdp => vec![NetRole::Y, NetRole::Z],
        }
    }

    fn network_names(&self) -> Vec<String> {
        let roles = self.roles();
        (0..self.grid.n_steps()).flat_map(|n| roles.iter().map(move |&r| net_file_name(r, n))).collect()
    }

    fn content_hash(&self, dir: &Path, names: &[String]) -> Result<String> {
        let core = ManifestCore {
            format: FORMAT_VERSION,
            scheme: self.scheme,
            grid: self.grid,
            portfolio: &self.portfolio,
            portfolio_hash: portfolio_hash(&self.portfolio),
            train: &self.config,
            losses: &self.losses,
            networks: names.to_vec(),
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&core)?);
        for name in names {
            h.update(fs::read(dir.join(name))?);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Writes the manifest and every network file into `dir`, creating it if needed.
    /// Returns the content hash, which excludes wall time.
    pub fn save(&self, dir: &Path) -> Result<String> {
        fs::create_dir_all(dir)?;
        for n in 0..self.grid.n_steps() {
            let nets = self.step(n).ok_or_else(|| Error::Incompatible(format!("no networks for time step {n}")))?;
            save_net(dir, &nets.y, NetRole::Y, n)?;
            save_net(dir, &nets.z, NetRole::Z, n)?;
            if let (Some(g), Scheme::Osm) = (&nets.gamma, self.scheme) {
                save_net(dir, g, NetRole::Gamma, n)?;
            }
        }
        let networks = self.network_names();
        let content_hash = self.content_hash(dir, &networks)?;
        let manifest = Manifest {
            format: FORMAT_VERSION,
            scheme: self.scheme,
            grid: self.grid,
            portfolio: self.portfolio.clone(),
            portfolio_hash: portfolio_hash(&self.portfolio),
            train: self.config.clone(),
            losses: self.losses.clone(),
            networks,
            wall_time_secs: self.wall_time_secs,
            content_hash: content_hash.clone(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(content_hash)
    }

    /// Reads an artifact written by [`SolverArtifact::save`], verifying its content hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != FORMAT_VERSION {
            return Err(Error::Incompatible(format!("manifest format {} (expected {FORMAT_VERSION})", m.format)));
        }
        if m.portfolio_hash != portfolio_hash(&m.portfolio) {
            return Err(Error::Incompatible("portfolio hash does not match the stored portfolio".into()));
        }
        let model = m.portfolio.validate(&m.grid)?;
        let mut art = SolverArtifact::empty(m.scheme, m.grid, m.portfolio, model, m.train);
        art.losses = m.losses;
        art.wall_time_secs = m.wall_time_secs;
        if m.networks != art.network_names() {
            return Err(Error::Incompatible("network list does not match the grid and scheme".into()));
        }
        for n in 0..art.grid.n_steps() {
            let gamma = match art.scheme {
                Scheme::Osm => Some(load_net(dir, NetRole::Gamma, n)?),
                Scheme::Rdbdp => None,
            };
            art.steps[n] = Some(StepNets { y: load_net(dir, NetRole::Y, n)?, z: load_net(dir, NetRole::Z, n)?, gamma });
        }
        let hash = art.content_hash(dir, &m.networks)?;
        if hash != m.content_hash {
            return Err(Error::Incompatible("content hash mismatch".into()));
        }
        Ok(art)
    }

    /// Reads only the content hash recorded in a manifest.
    pub fn manifest_hash(dir: &Path) -> Result<String> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Manifest = serde_json::from_str(&text)?;
        Ok(m.content_hash)
    }
}
