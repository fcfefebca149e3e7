//! Fully connected tanh network with optional batch normalization and
//! hand-written reverse mode.
//!
//! Layout: `[BN] → (Linear → [BN] → tanh) × L → Linear`. All trainable
//! parameters live in one flat vector so the optimizer sees a single slice.
//!
//! Running batch-norm statistics are exponential moving averages started
//! from `(0, 1)` and bias corrected on read, so a network trained for a few
//! hundred iterations already normalizes with the population moments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
/// Features with variance below `BN_DEGENERATE · (1 + mean²)` are treated as
/// constant and normalize to exactly zero.
pub const BN_DEGENERATE: f64 = 1e-20;

fn inv_std(mean: f64, var: f64) -> f64 {
    if var <= BN_DEGENERATE * (1.0 + mean * mean) {
        0.0
    } else {
        1.0 / (var + BN_EPS).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub batch_norm: bool,
}

impl MlpSpec {
    /// Four hidden layers of width 50 with batch normalization.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec { input_dim, hidden_layers: 4, hidden_width: 50, output_dim, batch_norm: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(Error::ShapeMismatch(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }

    fn linear_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    /// Widths of the batch-norm layers: the input, then each hidden layer.
    fn bn_dims(&self) -> Vec<usize> {
        if !self.batch_norm {
            return Vec::new();
        }
        std::iter::once(self.input_dim).chain(std::iter::repeat_n(self.hidden_width, self.hidden_layers)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LinearSlot {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BnSlot {
    width: usize,
    gamma: usize,
    beta: usize,
}

/// Fixed affine maps around the network: inputs are standardized as
/// `(x − input_shift) / input_scale` and raw outputs mapped to
/// `output_shift + output_scale · raw`. Not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Scaling {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Scaling {
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            output_shift: vec![0.0; output_dim],
            output_scale: vec![1.0; output_dim],
        }
    }

    fn validate(&self, spec: &MlpSpec) -> Result<()> {
        let ok = self.input_shift.len() == spec.input_dim
            && self.input_scale.len() == spec.input_dim
            && self.output_shift.len() == spec.output_dim
            && self.output_scale.len() == spec.output_dim
            && self.input_scale.iter().chain(&self.output_scale).all(|s| s.is_finite() && *s > 0.0)
            && self.input_shift.iter().chain(&self.output_shift).all(|s| s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("scaling does not fit the network shape or is not positive".into()))
        }
    }
}

/// Bias-corrected exponential moving averages of batch moments for one
/// normalization layer; `(0, 1)` before the first update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub updates: u64,
}

impl RunningStats {
    fn fresh(width: usize) -> Self {
        RunningStats { mean: vec![0.0; width], var: vec![1.0; width], updates: 0 }
    }

    /// Bias-corrected `(mean, var)` for component `i`.
    fn estimate(&self, i: usize) -> (f64, f64) {
        (self.mean[i], self.var[i])
    }

    /// Bias-corrected EMA step written as a convex update of the corrected
    /// moments, so a constant signal is tracked exactly.
    fn update(&mut self, mean: &[f64], var: &[f64]) {
        self.updates += 1;
        let w = (1.0 - BN_MOMENTUM) / (1.0 - BN_MOMENTUM.powf(self.updates as f64));
        for j in 0..mean.len() {
            self.mean[j] += w * (mean[j] - self.mean[j]);
            self.var[j] += w * (var[j] - self.var[j]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics updated unless frozen.
    Train,
    /// Running statistics.
    Infer,
}

/// Network parameters plus batch-norm state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    linears: Vec<LinearSlot>,
    bns: Vec<BnSlot>,
    pub params: Vec<f64>,
    pub running: Vec<RunningStats>,
    scaling: Scaling,
    /// Running statistics are immutable.
    pub stats_frozen: bool,
    /// Batch-norm scale and shift receive gradients.
    pub affine_trainable: bool,
}

/// Activations cached by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    /// Input to each linear layer (`B × fan_in`).
    lin_in: Vec<Vec<f64>>,
    /// Normalized values and inverse std of each batch-norm layer.
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, unit scale and zero shift.
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for l in net.linears.clone() {
            let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut net.params[l.w..l.w + l.fan_in * l.fan_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// All weights and biases zero; batch-norm scales one.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut offset = 0;
        let mut bns = Vec::new();
        for width in spec.bn_dims() {
            bns.push(BnSlot { width, gamma: offset, beta: offset + width });
            offset += 2 * width;
        }
        let mut linears = Vec::new();
        for (fan_in, fan_out) in spec.linear_dims() {
            linears.push(LinearSlot { fan_in, fan_out, w: offset, b: offset + fan_in * fan_out });
            offset += fan_in * fan_out + fan_out;
        }
        let mut params = vec![0.0; offset];
        for bn in &bns {
            params[bn.gamma..bn.gamma + bn.width].fill(1.0);
        }
        let running = bns.iter().map(|b| RunningStats::fresh(b.width)).collect();
        let scaling = Scaling::identity(spec.input_dim, spec.output_dim);
        Ok(Mlp { spec, linears, bns, params, running, scaling, stats_frozen: false, affine_trainable: true })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn set_scaling(&mut self, scaling: Scaling) -> Result<()> {
        scaling.validate(&self.spec)?;
        self.scaling = scaling;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Mutable views of the weight matrix (`fan_in × fan_out`) and bias of linear layer `i`.
    pub fn linear_mut(&mut self, i: usize) -> (&mut [f64], usize, usize) {
        let l = self.linears[i];
        (&mut self.params[l.w..l.b + l.fan_out], l.fan_in, l.fan_out)
    }

    /// Copy for warm-starting the previous time step: running statistics
    /// reset to `(0, 1)`, batch-norm affine parameters kept but frozen.
    pub fn transfer(&self) -> Self {
        let mut net = self.clone();
        for (rs, bn) in net.running.iter_mut().zip(&net.bns) {
            *rs = RunningStats::fresh(bn.width);
        }
        net.stats_frozen = false;
        net.affine_trainable = false;
        net
    }

    /// Index ranges of the batch-norm scale/shift parameters.
    pub fn affine_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.bns.iter().map(|b| b.gamma..b.beta + b.width).collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<usize> {
        let d = self.spec.input_dim;
        if input.is_empty() || input.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("input of length {} is not a nonempty batch of width {d}", input.len())));
        }
        Ok(input.len() / d)
    }

    /// Normalizes `x` in place. In training mode the batch moments are pushed onto `moments`.
    fn batch_norm(&self, k: usize, x: &mut [f64], batch: usize, mode: Mode, cache: Option<&mut Cache>, moments: &mut Vec<(Vec<f64>, Vec<f64>)>) {
        let bn = self.bns[k];
        let n = bn.width;
        let gamma = &self.params[bn.gamma..bn.gamma + n];
        let beta = &self.params[bn.beta..bn.beta + n];
        match mode {
            Mode::Infer => {
                let stats = &self.running[k];
                for j in 0..n {
                    let (m, v) = stats.estimate(j);
                    let inv = inv_std(m, v);
                    let (g, b) = (gamma[j] * inv, beta[j] - gamma[j] * inv * m);
                    for row in 0..batch {
                        let e = &mut x[row * n + j];
                        *e = *e * g + b;
                    }
                }
            }
            Mode::Train => {
                let bf = batch as f64;
                let mut mean = vec![0.0; n];
                let mut var = vec![0.0; n];
                for row in x.chunks_exact(n) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= bf);
                for row in x.chunks_exact(n) {
                    for j in 0..n {
                        let c = row[j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= bf);
                let inv: Vec<f64> = mean.iter().zip(&var).map(|(&m, &v)| inv_std(m, v)).collect();
                for row in x.chunks_exact_mut(n) {
                    for j in 0..n {
                        row[j] = (row[j] - mean[j]) * inv[j];
                    }
                }
                if let Some(c) = cache {
                    c.xhat.push(x.to_vec());
                    c.inv_std.push(inv);
                }
                for row in x.chunks_exact_mut(n) {
                    for j in 0..n {
                        row[j] = row[j] * gamma[j] + beta[j];
                    }
                }
                moments.push((mean, var));
            }
        }
    }

    fn run(&self, input: &[f64], mode: Mode, mut cache: Option<&mut Cache>) -> Result<(Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>)> {
        let batch = self.check_input(input)?;
        let mut moments = Vec::new();
        let sc = &self.scaling;
        let mut h = input.to_vec();
        for row in h.chunks_exact_mut(self.spec.input_dim) {
            for ((v, m), s) in row.iter_mut().zip(&sc.input_shift).zip(&sc.input_scale) {
                *v = (*v - m) / s;
            }
        }
        let bn_on = self.spec.batch_norm;
        if bn_on {
            self.batch_norm(0, &mut h, batch, mode, cache.as_deref_mut(), &mut moments);
        }
        let n_lin = self.linears.len();
        for i in 0..n_lin {
            let l = self.linears[i];
            let mut z = vec![0.0; batch * l.fan_out];
            linalg::matmul(&h, &self.params[l.w..l.b], &mut z, batch, l.fan_in, l.fan_out);
            let bias = &self.params[l.b..l.b + l.fan_out];
            for row in z.chunks_exact_mut(l.fan_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.lin_in.push(std::mem::take(&mut h));
            }
            if i + 1 < n_lin {
                if bn_on {
                    self.batch_norm(i + 1, &mut z, batch, mode, cache.as_deref_mut(), &mut moments);
                }
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = z;
        }
        for row in h.chunks_exact_mut(self.spec.output_dim) {
            for ((v, m), s) in row.iter_mut().zip(&sc.output_shift).zip(&sc.output_scale) {
                *v = m + s * *v;
            }
        }
        Ok((h, moments))
    }

    fn absorb(&mut self, moments: Vec<(Vec<f64>, Vec<f64>)>) {
        if self.stats_frozen {
            return;
        }
        for (stats, (mean, var)) in self.running.iter_mut().zip(moments) {
            stats.update(&mean, &var);
        }
    }

    /// Forward pass without caching. `Mode::Train` updates running statistics unless frozen.
    pub fn forward(&mut self, input: &[f64], mode: Mode) -> Result<Vec<f64>> {
        let (out, moments) = self.run(input, mode, None)?;
        self.absorb(moments);
        Ok(out)
    }

    /// Inference forward pass with running statistics.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(input, Mode::Infer, None)?.0)
    }

    /// Training-mode forward pass without side effects.
    pub fn eval_train(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(input, Mode::Train, None)?.0)
    }

    /// Training-mode forward pass that caches activations for [`Mlp::backward`].
    pub fn forward_train(&mut self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let batch = self.check_input(input)?;
        let mut cache = Cache { batch, lin_in: Vec::new(), xhat: Vec::new(), inv_std: Vec::new() };
        let (out, moments) = self.run(input, Mode::Train, Some(&mut cache))?;
        self.absorb(moments);
        Ok((out, cache))
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient `upstream` with respect to the outputs (`B × output_dim`).
    pub fn backward(&self, cache: &Cache, upstream: &[f64]) -> Vec<f64> {
        let batch = cache.batch;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = upstream.to_vec();
        for row in delta.chunks_exact_mut(self.spec.output_dim) {
            for (v, s) in row.iter_mut().zip(&self.scaling.output_scale) {
                *v *= s;
            }
        }
        let bn_on = self.spec.batch_norm;
        for i in (0..self.linears.len()).rev() {
            let l = self.linears[i];
            let input = &cache.lin_in[i];
            linalg::matmul_at_b_acc(input, &delta, &mut grad[l.w..l.b], batch, l.fan_in, l.fan_out);
            let gb = &mut grad[l.b..l.b + l.fan_out];
            for row in delta.chunks_exact(l.fan_out) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if i == 0 && !bn_on {
                break;
            }
            let mut dh = vec![0.0; batch * l.fan_in];
            linalg::matmul_a_bt(&delta, &self.params[l.w..l.b], &mut dh, batch, l.fan_out, l.fan_in);
            if i > 0 {
                // through tanh: `input` holds the activation
                for (g, a) in dh.iter_mut().zip(input) {
                    *g *= 1.0 - a * a;
                }
            }
            if bn_on {
                dh = self.bn_backward(i, cache, &dh, &mut grad, i > 0);
            }
            delta = dh;
        }
        if !self.affine_trainable {
            for r in self.affine_ranges() {
                grad[r].fill(0.0);
            }
        }
        grad
    }

    fn bn_backward(&self, k: usize, cache: &Cache, dy: &[f64], grad: &mut [f64], need_input: bool) -> Vec<f64> {
        let bn = self.bns[k];
        let n = bn.width;
        let batch = cache.batch;
        let xhat = &cache.xhat[k];
        let inv = &cache.inv_std[k];
        let mut sum_dy = vec![0.0; n];
        let mut sum_dy_xhat = vec![0.0; n];
        for (row_dy, row_x) in dy.chunks_exact(n).zip(xhat.chunks_exact(n)) {
            for j in 0..n {
                sum_dy[j] += row_dy[j];
                sum_dy_xhat[j] += row_dy[j] * row_x[j];
            }
        }
        for j in 0..n {
            grad[bn.gamma + j] += sum_dy_xhat[j];
            grad[bn.beta + j] += sum_dy[j];
        }
        if !need_input {
            return Vec::new();
        }
        let gamma = &self.params[bn.gamma..bn.gamma + n];
        let bf = batch as f64;
        let mut dx = vec![0.0; batch * n];
        for ((out, row_dy), row_x) in dx.chunks_exact_mut(n).zip(dy.chunks_exact(n)).zip(xhat.chunks_exact(n)) {
            for j in 0..n {
                out[j] = gamma[j] * inv[j] * (row_dy[j] - sum_dy[j] / bf - row_x[j] * sum_dy_xhat[j] / bf);
            }
        }
        dx
    }
}
