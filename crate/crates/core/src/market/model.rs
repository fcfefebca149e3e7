//! Forward diffusion coefficients: multi-asset Black–Scholes on prices and
//! the two-factor Heston model `(S, ν)`.
//!
//! Black–Scholes: `μ(x) = μ̄ ⊙ x`, `σ(x) = diag(σ̄ ⊙ x) L` with `L Lᵀ = corr`.
//!
//! Heston, with `w = √|ν|` and `c = √(1 − ρ²)`:
//!
//! ```text
//! μ(s, ν) = (μ̄ s, κ(ν̄ − ν))
//! σ(s, ν) = [[c w s, ρ w s],
//!            [0,     η w  ]]
//! ```
//!
//! All Jacobians are analytic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default tolerance below which the diffusion is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BlackScholes,
    Heston,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub nu_bar: f64,
    pub rho: f64,
    pub eta: f64,
}

/// Serializable description of the forward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Physical drift per tradeable asset.
    pub mu_bar: Vec<f64>,
    /// Volatility per asset (Black–Scholes only).
    #[serde(default)]
    pub sigma_bar: Vec<f64>,
    /// Continuous dividend yield per tradeable asset.
    pub q: Vec<f64>,
    pub r: f64,
    /// Row-major `m×m` correlation (Black–Scholes only).
    #[serde(default)]
    pub corr: Vec<f64>,
    #[serde(default)]
    pub heston: Option<HestonParams>,
    pub x0: Vec<f64>,
    /// Reject Heston parameters violating `2κν̄ ≥ η²`.
    #[serde(default)]
    pub strict_feller: bool,
    #[serde(default = "default_singular_tol")]
    pub singular_tol: f64,
}

fn default_singular_tol() -> f64 {
    SINGULAR_TOL
}

impl ModelSpec {
    /// `d`-asset Black–Scholes with a constant pairwise correlation.
    pub fn black_scholes_uniform(
        d: usize,
        x0: f64,
        mu_bar: f64,
        sigma_bar: f64,
        q: f64,
        r: f64,
        rho: f64,
    ) -> Self {
        let mut corr = vec![rho; d * d];
        for i in 0..d {
            corr[i * d + i] = 1.0;
        }
        ModelSpec {
            kind: ModelKind::BlackScholes,
            mu_bar: vec![mu_bar; d],
            sigma_bar: vec![sigma_bar; d],
            q: vec![q; d],
            r,
            corr,
            heston: None,
            x0: vec![x0; d],
            strict_feller: false,
            singular_tol: SINGULAR_TOL,
        }
    }

    pub fn heston(s0: f64, nu0: f64, mu_bar: f64, q: f64, r: f64, params: HestonParams) -> Self {
        ModelSpec {
            kind: ModelKind::Heston,
            mu_bar: vec![mu_bar],
            sigma_bar: Vec::new(),
            q: vec![q],
            r,
            corr: Vec::new(),
            heston: Some(params),
            x0: vec![s0, nu0],
            strict_feller: true,
            singular_tol: SINGULAR_TOL,
        }
    }

    pub fn build(&self) -> Result<Model> {
        Model::new(self.clone())
    }
}

/// Validated model with precomputed factors.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    d: usize,
    m: usize,
    chol: Vec<f64>,
    /// `L⁻¹ θ` with `θ_i = (μ̄_i − r + q_i)/σ̄_i`, the Black–Scholes driver's z-gradient (negated).
    risk_premium_z: Vec<f64>,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        match spec.kind {
            ModelKind::BlackScholes => {
                let d = spec.x0.len();
                if d == 0 {
                    return Err(Error::Config("model has no assets".into()));
                }
                for (name, v) in [("mu_bar", &spec.mu_bar), ("sigma_bar", &spec.sigma_bar), ("q", &spec.q)] {
                    if v.len() != d {
                        return Err(Error::ShapeMismatch(format!("{name} has length {} but d = {d}", v.len())));
                    }
                }
                if spec.corr.len() != d * d {
                    return Err(Error::ShapeMismatch(format!("corr must be {d}×{d}")));
                }
                for i in 0..d {
                    if (spec.corr[i * d + i] - 1.0).abs() > 1e-12 {
                        return Err(Error::Config(format!("corr[{i},{i}] is not 1")));
                    }
                    for j in 0..i {
                        if (spec.corr[i * d + j] - spec.corr[j * d + i]).abs() > 1e-12 {
                            return Err(Error::Config("corr is not symmetric".into()));
                        }
                    }
                }
                let chol = linalg::cholesky(&spec.corr, d)?;
                let theta: Vec<f64> = (0..d)
                    .map(|i| (spec.mu_bar[i] - spec.r + spec.q[i]) / spec.sigma_bar[i])
                    .collect();
                // ∇_z f = −(Σ⁻¹ θ)ᵀ, i.e. solve L u = θ.
                let mut u = vec![0.0; d];
                linalg::solve_col_lower(&chol, d, &theta, &mut u);
                Ok(Model { spec, d, m: d, chol, risk_premium_z: u })
            }
            ModelKind::Heston => {
                let h = spec
                    .heston
                    .ok_or_else(|| Error::Config("Heston model requires heston parameters".into()))?;
                if spec.x0.len() != 2 || spec.mu_bar.len() != 1 || spec.q.len() != 1 {
                    return Err(Error::ShapeMismatch("Heston requires d = 2, m = 1".into()));
                }
                if h.rho.abs() >= 1.0 {
                    return Err(Error::Config("Heston |rho| must be < 1".into()));
                }
                if spec.strict_feller && 2.0 * h.kappa * h.nu_bar < h.eta * h.eta {
                    return Err(Error::Config(format!(
                        "Feller condition violated: 2κν̄ = {} < η² = {}",
                        2.0 * h.kappa * h.nu_bar,
                        h.eta * h.eta
                    )));
                }
                Ok(Model { spec, d: 2, m: 1, chol: Vec::new(), risk_premium_z: Vec::new() })
            }
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }
    /// State dimension.
    pub fn d(&self) -> usize {
        self.d
    }
    /// Number of tradeable assets (the leading `m` state components).
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn r(&self) -> f64 {
        self.spec.r
    }
    pub fn q(&self) -> &[f64] {
        &self.spec.q
    }
    pub fn x0(&self) -> &[f64] {
        &self.spec.x0
    }
    /// Cholesky factor of the asset correlation (Black–Scholes only).
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }
    pub fn singular_tol(&self) -> f64 {
        self.spec.singular_tol
    }

    fn heston_params(&self) -> HestonParams {
        self.spec.heston.expect("validated at construction")
    }

    /// Volatility of asset `i` under Black–Scholes; for Heston, the instantaneous `√ν`.
    pub fn asset_vol(&self, i: usize, x: &[f64]) -> f64 {
        match self.spec.kind {
            ModelKind::BlackScholes => self.spec.sigma_bar[i],
            ModelKind::Heston => x[1].abs().sqrt(),
        }
    }

    pub fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self.spec.kind {
            ModelKind::BlackScholes => {
                for i in 0..self.d {
                    out[i] = self.spec.mu_bar[i] * x[i];
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                out[0] = self.spec.mu_bar[0] * x[0];
                out[1] = h.kappa * (h.nu_bar - x[1]);
            }
        }
    }

    /// Row-major `d×d` diffusion matrix. Heston evaluates at `|ν|`.
    pub fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        match self.spec.kind {
            ModelKind::BlackScholes => {
                for i in 0..d {
                    let scale = self.spec.sigma_bar[i] * x[i];
                    for k in 0..d {
                        out[i * d + k] = scale * self.chol[i * d + k];
                    }
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                let w = x[1].abs().sqrt();
                let c = (1.0 - h.rho * h.rho).sqrt();
                out[0] = c * w * x[0];
                out[1] = h.rho * w * x[0];
                out[2] = 0.0;
                out[3] = h.eta * w;
            }
        }
    }

    /// One-step Malliavin propagator `M = I + Δt ∇μ + Σ_k ΔW_k ∇σ^k`, so that
    /// `D_n X_{n+1} = M D_n X_n`. Row-major `d×d`.
    pub fn malliavin_propagator(&self, _t: f64, x: &[f64], dt: f64, dw: &[f64], out: &mut [f64]) {
        let d = self.d;
        match self.spec.kind {
            ModelKind::BlackScholes => {
                out.fill(0.0);
                for i in 0..d {
                    let mut ldw = 0.0;
                    for k in 0..=i {
                        ldw += self.chol[i * d + k] * dw[k];
                    }
                    out[i * d + i] = 1.0 + self.spec.mu_bar[i] * dt + self.spec.sigma_bar[i] * ldw;
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                let w = x[1].abs().sqrt().max(self.spec.singular_tol);
                let c = (1.0 - h.rho * h.rho).sqrt();
                let s = x[0];
                let (dw1, dw2) = (dw[0], dw[1]);
                // ∂σ/∂s = [[c w, ρ w], [0, 0]]; ∂σ/∂ν = [[c s/2w, ρ s/2w], [0, η/2w]]
                out[0] = 1.0 + self.spec.mu_bar[0] * dt + c * w * dw1 + h.rho * w * dw2;
                out[1] = (c * dw1 + h.rho * dw2) * s / (2.0 * w);
                out[2] = 0.0;
                out[3] = 1.0 - h.kappa * dt + h.eta * dw2 / (2.0 * w);
            }
        }
    }

    /// Writes `v σ⁻¹(t, x)` for a block of `rows` row vectors of width `d`.
    pub fn apply_sigma_inverse(&self, _t: f64, x: &[f64], v: &[f64], rows: usize, out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let tol = self.spec.singular_tol;
        match self.spec.kind {
            ModelKind::BlackScholes => {
                for i in 0..d {
                    if (self.spec.sigma_bar[i] * x[i]).abs() <= tol {
                        return Err(Error::SingularDiffusion(format!("σ̄_{i} x_{i} = {:.3e}", self.spec.sigma_bar[i] * x[i])));
                    }
                }
                for r in 0..rows {
                    let vr = &v[r * d..(r + 1) * d];
                    let or = &mut out[r * d..(r + 1) * d];
                    linalg::solve_row_lower(&self.chol, d, vr, or);
                    for i in 0..d {
                        or[i] /= self.spec.sigma_bar[i] * x[i];
                    }
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                let w = x[1].abs().sqrt();
                let c = (1.0 - h.rho * h.rho).sqrt();
                let a = c * w * x[0];
                if w <= tol || a.abs() <= tol {
                    return Err(Error::SingularDiffusion(format!("√ν = {w:.3e}, s = {:.3e}", x[0])));
                }
                let b = h.rho * w * x[0];
                let e = h.eta * w;
                // [[a, b], [0, e]]⁻¹ = [[1/a, −b/(a e)], [0, 1/e]]
                for r in 0..rows {
                    let (v0, v1) = (v[r * 2], v[r * 2 + 1]);
                    out[r * 2] = v0 / a;
                    out[r * 2 + 1] = -v0 * b / (a * e) + v1 / e;
                }
            }
        }
        Ok(())
    }

    /// Writes `(Delta ∇σ)_{kl} = Σ_i Delta_i ∂_l σ_{ik}` for one row `delta` of width `d`.
    pub fn delta_dsigma(&self, _t: f64, x: &[f64], delta: &[f64], out: &mut [f64]) {
        let d = self.d;
        match self.spec.kind {
            ModelKind::BlackScholes => {
                // ∂_l σ_{ik} = δ_{il} σ̄_i L_{ik}
                for k in 0..d {
                    for l in 0..d {
                        out[k * d + l] = delta[l] * self.spec.sigma_bar[l] * self.chol[l * d + k];
                    }
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                let w = x[1].abs().sqrt().max(self.spec.singular_tol);
                let c = (1.0 - h.rho * h.rho).sqrt();
                let s = x[0];
                let ds = [c * w, h.rho * w]; // ∂_s σ_{0k}
                let dn0 = [c * s / (2.0 * w), h.rho * s / (2.0 * w)]; // ∂_ν σ_{0k}
                let dn1 = [0.0, h.eta / (2.0 * w)]; // ∂_ν σ_{1k}
                for k in 0..2 {
                    out[k * 2] = delta[0] * ds[k];
                    out[k * 2 + 1] = delta[0] * dn0[k] + delta[1] * dn1[k];
                }
            }
        }
    }

    /// Solves `σᵀ(t, x) H = m` for the `d×d` matrix `H`.
    pub fn solve_sigma_transpose(&self, _t: f64, x: &[f64], m: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let tol = self.spec.singular_tol;
        match self.spec.kind {
            ModelKind::BlackScholes => {
                // σᵀ = Lᵀ D, so H = D⁻¹ L⁻ᵀ m.
                for i in 0..d {
                    if (self.spec.sigma_bar[i] * x[i]).abs() <= tol {
                        return Err(Error::SingularDiffusion(format!("σ̄_{i} x_{i} = {:.3e}", self.spec.sigma_bar[i] * x[i])));
                    }
                }
                for col in 0..d {
                    for i in (0..d).rev() {
                        let mut s = m[i * d + col];
                        for k in (i + 1)..d {
                            s -= self.chol[k * d + i] * out[k * d + col];
                        }
                        out[i * d + col] = s / self.chol[i * d + i];
                    }
                }
                for i in 0..d {
                    let scale = self.spec.sigma_bar[i] * x[i];
                    for col in 0..d {
                        out[i * d + col] /= scale;
                    }
                }
            }
            ModelKind::Heston => {
                let h = self.heston_params();
                let w = x[1].abs().sqrt();
                let c = (1.0 - h.rho * h.rho).sqrt();
                let a = c * w * x[0];
                if w <= tol || a.abs() <= tol {
                    return Err(Error::SingularDiffusion(format!("√ν = {w:.3e}, s = {:.3e}", x[0])));
                }
                let b = h.rho * w * x[0];
                let e = h.eta * w;
                // σᵀ = [[a, 0], [b, e]]
                for col in 0..2 {
                    let h0 = m[col] / a;
                    out[col] = h0;
                    out[2 + col] = (m[2 + col] - b * h0) / e;
                }
            }
        }
        Ok(())
    }

    /// Black–Scholes driver gradient in `z` (identical for every contract):
    /// `∇_z f = −(Σ⁻¹ θ)ᵀ`. Empty for Heston.
    pub(crate) fn bs_driver_z(&self) -> &[f64] {
        &self.risk_premium_z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heston_a() -> Model {
        ModelSpec::heston(10.0, 0.0625, 0.1, 0.0, 0.1, HestonParams { kappa: 5.0, nu_bar: 0.16, rho: 0.1, eta: 0.9 })
            .build()
            .unwrap()
    }

    #[test]
    fn sigma_inverse_recovers_unit_rows() {
        let m = ModelSpec::black_scholes_uniform(3, 100.0, 0.05, 0.25, 0.0, 0.0, 0.4).build().unwrap();
        let x = [90.0, 105.0, 120.0];
        let mut sigma = [0.0; 9];
        m.diffusion(0.0, &x, &mut sigma);
        let mut out = [0.0; 9];
        m.apply_sigma_inverse(0.0, &x, &sigma, 3, &mut out).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((out[i * 3 + j] - e).abs() < 1e-14, "{out:?}");
            }
        }
    }

    #[test]
    fn sigma_inverse_scalar() {
        let m = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0).build().unwrap();
        let mut out = [0.0];
        m.apply_sigma_inverse(0.0, &[100.0], &[50.0], 1, &mut out).unwrap();
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn heston_inverse_matches_dense_inverse() {
        let m = heston_a();
        let x = m.x0().to_vec();
        let mut s = [0.0; 4];
        m.diffusion(0.0, &x, &mut s);
        let det = s[0] * s[3] - s[1] * s[2];
        let inv = [s[3] / det, -s[1] / det, -s[2] / det, s[0] / det];
        let v = [0.7, -1.3];
        let mut out = [0.0; 2];
        m.apply_sigma_inverse(0.0, &x, &v, 1, &mut out).unwrap();
        let dense = [v[0] * inv[0] + v[1] * inv[2], v[0] * inv[1] + v[1] * inv[3]];
        assert!((out[0] - dense[0]).abs() < 1e-12);
        assert!((out[1] - dense[1]).abs() < 1e-12);
    }

    #[test]
    fn singular_states_are_rejected() {
        let m = ModelSpec::black_scholes_uniform(1, 100.0, 0.0, 0.25, 0.0, 0.0, 0.0).build().unwrap();
        let mut out = [0.0];
        assert!(matches!(
            m.apply_sigma_inverse(0.0, &[0.0], &[1.0], 1, &mut out),
            Err(Error::SingularDiffusion(_))
        ));
        let h = heston_a();
        let mut out = [0.0; 2];
        assert!(h.apply_sigma_inverse(0.0, &[10.0, 0.0], &[1.0, 1.0], 1, &mut out).is_err());
    }

    #[test]
    fn feller_is_enforced_when_strict() {
        let mut spec = ModelSpec::heston(10.0, 0.0625, 0.1, 0.0, 0.1, HestonParams { kappa: 1.0, nu_bar: 0.1, rho: 0.1, eta: 0.9 });
        assert!(spec.build().is_err());
        spec.strict_feller = false;
        assert!(spec.build().is_ok());
    }

    /// Finite differences of σ recover the analytic contraction used for Hessian recovery.
    #[test]
    fn delta_dsigma_matches_finite_differences() {
        let bs = ModelSpec::black_scholes_uniform(2, 100.0, 0.05, 0.3, 0.0, 0.0, 0.6).build().unwrap();
        for model in [bs, heston_a()] {
            let d = model.d();
            let x: Vec<f64> = if d == 2 && model.kind() == ModelKind::Heston { vec![9.0, 0.09] } else { vec![95.0, 110.0] };
            let delta = [0.4, -0.7];
            let mut analytic = vec![0.0; d * d];
            model.delta_dsigma(0.0, &x, &delta, &mut analytic);
            for l in 0..d {
                let h = 1e-6 * x[l].abs();
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[l] += h;
                xm[l] -= h;
                let (mut sp, mut sm) = (vec![0.0; d * d], vec![0.0; d * d]);
                model.diffusion(0.0, &xp, &mut sp);
                model.diffusion(0.0, &xm, &mut sm);
                for k in 0..d {
                    let fd: f64 = (0..d).map(|i| delta[i] * (sp[i * d + k] - sm[i * d + k]) / (2.0 * h)).sum();
                    assert!((fd - analytic[k * d + l]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k} l={l} fd={fd} an={}", analytic[k * d + l]);
                }
            }
        }
    }

    #[test]
    fn sigma_transpose_solve_inverts() {
        let m = ModelSpec::black_scholes_uniform(3, 100.0, 0.05, 0.25, 0.0, 0.0, 0.3).build().unwrap();
        let x = [80.0, 100.0, 130.0];
        let mut s = [0.0; 9];
        m.diffusion(0.0, &x, &mut s);
        let h: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        // rhs = σᵀ h
        let mut rhs = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rhs[i * 3 + j] = (0..3).map(|k| s[k * 3 + i] * h[k * 3 + j]).sum();
            }
        }
        let mut out = [0.0; 9];
        m.solve_sigma_transpose(0.0, &x, &rhs, &mut out).unwrap();
        for i in 0..9 {
            assert!((out[i] - h[i]).abs() < 1e-12);
        }
    }
}
