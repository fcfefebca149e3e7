//! Empirical losses with analytic gradients with respect to the network outputs.
//!
//! Shapes are row-major with the batch as the leading axis: `B×J` for prices,
//! `B×J×d` for `Z`-type rows, `B×J×d×d` for the `γ` network output.

/// Inputs of the `Z`/`Γ` loss at one time step.
#[derive(Debug, Clone, Copy)]
pub struct ZLossInputs<'a> {
    pub batch: usize,
    pub j: usize,
    pub d: usize,
    pub dt: f64,
    /// `ΔW_n`, `B×d`.
    pub dw: &'a [f64],
    /// `σ(t_n, X_n)`, `B×d×d`.
    pub sigma: &'a [f64],
    /// `D_nY_{n+1} + Δt (∇_x f D_nX_{n+1} + ∇_y f D_nỸ_{n+1})`, `B×J×d`.
    pub target: &'a [f64],
    /// `∇_z f` at `t_{n+1}`, `B×J×d`.
    pub grad_z: &'a [f64],
}

/// Value and output gradients of a loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    /// Gradients with respect to each network output, in argument order.
    pub grads: Vec<Vec<f64>>,
}

/// `(1/(BJ)) Σ |T − ψ + Δt ∇_z f (χσ) − (χσ)ᵀ ΔW|²`.
///
/// Component `m` of the residual is `T_m − ψ_m + Σ_k a_k (χσ)_{km}` with
/// `a = Δt ∇_z f − ΔW`.
pub fn loss_z(inp: &ZLossInputs, psi: &[f64], chi: &[f64]) -> LossEval {
    let (b, j, d) = (inp.batch, inp.j, inp.d);
    let dd = d * d;
    let scale = 1.0 / (b * j) as f64;
    let mut loss = 0.0;
    let mut g_psi = vec![0.0; b * j * d];
    let mut g_chi = vec![0.0; b * j * dd];
    let mut a = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut r = vec![0.0; d];
    for s in 0..b {
        let sigma = &inp.sigma[s * dd..(s + 1) * dd];
        let dw = &inp.dw[s * d..(s + 1) * d];
        for c in 0..j {
            let row = (s * j + c) * d;
            let chi_c = &chi[(s * j + c) * dd..(s * j + c + 1) * dd];
            for k in 0..d {
                a[k] = inp.dt * inp.grad_z[row + k] - dw[k];
            }
            // u = aᵀ χ
            u.fill(0.0);
            for k in 0..d {
                let ak = a[k];
                for l in 0..d {
                    u[l] += ak * chi_c[k * d + l];
                }
            }
            for m in 0..d {
                let mut v = inp.target[row + m] - psi[row + m];
                for l in 0..d {
                    v += u[l] * sigma[l * d + m];
                }
                r[m] = v;
                loss += v * v;
                g_psi[row + m] = -2.0 * scale * v;
            }
            let gc = &mut g_chi[(s * j + c) * dd..(s * j + c + 1) * dd];
            for l in 0..d {
                let sr: f64 = (0..d).map(|m| sigma[l * d + m] * r[m]).sum();
                for k in 0..d {
                    gc[k * d + l] = 2.0 * scale * a[k] * sr;
                }
            }
        }
    }
    LossEval { loss: loss * scale, grads: vec![g_psi, g_chi] }
}

/// Inputs of the continuation-value loss at one time step.
#[derive(Debug, Clone, Copy)]
pub struct YLossInputs<'a> {
    pub batch: usize,
    pub j: usize,
    pub dt: f64,
    pub theta_y: f64,
    /// Discount rate: the driver is `−r y + z·a(x)`.
    pub r: f64,
    /// `Ŷ_{n+1}`, `B×J`.
    pub y_next: &'a [f64],
    /// `f(t_{n+1}, X_{n+1}, Ỹ_{n+1}, Z_{n+1})`, `B×J`.
    pub f_next: &'a [f64],
    /// `Ẑ_n · a(X_n)`, the `z` part of `f(t_n, ·)`, `B×J`.
    pub z_drift: &'a [f64],
    /// `Ẑ_n ΔW_n`, `B×J`.
    pub z_dw: &'a [f64],
}

/// `(1/B) Σ_b Σ_j |Ŷ_{n+1} + (1−θ)Δt f_{n+1} + θΔt f(t_n, X_n, φ, Ẑ_n) − φ − Ẑ_nΔW|²`.
pub fn loss_y(inp: &YLossInputs, phi: &[f64]) -> LossEval {
    let n = inp.batch * inp.j;
    let scale = 1.0 / inp.batch as f64;
    let (dt, th) = (inp.dt, inp.theta_y);
    let slope = -th * dt * inp.r - 1.0;
    let mut loss = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let f_now = -inp.r * phi[i] + inp.z_drift[i];
        let e = inp.y_next[i] + (1.0 - th) * dt * inp.f_next[i] + th * dt * f_now - phi[i] - inp.z_dw[i];
        loss += e * e;
        g[i] = 2.0 * scale * e * slope;
    }
    LossEval { loss: loss * scale, grads: vec![g] }
}

/// Inputs of the joint price/gradient regression loss of the RDBDP baseline.
#[derive(Debug, Clone, Copy)]
pub struct RdbdpInputs<'a> {
    pub batch: usize,
    pub j: usize,
    pub d: usize,
    pub dt: f64,
    pub r: f64,
    /// `Ŷ_{n+1}`, `B×J`.
    pub y_next: &'a [f64],
    /// `a(X_n)` with `f = −r y + z·a`, `B×d`.
    pub drift_coeff: &'a [f64],
    /// `B×d`.
    pub dw: &'a [f64],
}

/// `(1/B) Σ_b Σ_j |Ŷ_{n+1} − φ + Δt f(t_n, X_n, φ, ψ) − ψ ΔW|²`.
pub fn loss_rdbdp(inp: &RdbdpInputs, phi: &[f64], psi: &[f64]) -> LossEval {
    let (b, j, d) = (inp.batch, inp.j, inp.d);
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut g_phi = vec![0.0; b * j];
    let mut g_psi = vec![0.0; b * j * d];
    for s in 0..b {
        let a = &inp.drift_coeff[s * d..(s + 1) * d];
        let dw = &inp.dw[s * d..(s + 1) * d];
        for c in 0..j {
            let i = s * j + c;
            let z = &psi[i * d..(i + 1) * d];
            let mut zf = 0.0;
            let mut zdw = 0.0;
            for k in 0..d {
                zf += z[k] * a[k];
                zdw += z[k] * dw[k];
            }
            let e = inp.y_next[i] - phi[i] + inp.dt * (-inp.r * phi[i] + zf) - zdw;
            loss += e * e;
            g_phi[i] = 2.0 * scale * e * (-1.0 - inp.dt * inp.r);
            for k in 0..d {
                g_psi[i * d + k] = 2.0 * scale * e * (inp.dt * a[k] - dw[k]);
            }
        }
    }
    LossEval { loss: loss * scale, grads: vec![g_phi, g_psi] }
}
