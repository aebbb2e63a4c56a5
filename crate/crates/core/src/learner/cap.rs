//! Convolution-attention target head with a hand-written backward pass.
//!
//! Forward: `F = MaskedConv(X)`, `Att = sigmoid(W_a F + b_a)`,
//! `p = mean over valid cells of F * Att`, `T = MLP(p)` with the quaternion
//! block of `T` renormalized. Padded cells never enter a sum, so their
//! features cannot influence the output.

use super::grid::{TokenGrid, GRID_CHANNELS};
use super::LearnerError;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Label layout: quaternion `[qw qx qy qz]` then position `[x y z]`.
pub const TARGET_OUT: usize = 7;
pub const QUAT: std::ops::Range<usize> = 0..4;
pub const POSITION: std::ops::Range<usize> = 4..7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapConfig {
    pub in_channels: usize,
    pub mid_channels: usize,
    /// Odd kernel side length.
    pub kernel: usize,
    pub hidden: usize,
    pub out: usize,
    /// With `false` the attention map is fixed at one.
    pub attention: bool,
    pub hidden_activation: Activation,
    pub renormalize: bool,
}

impl Default for CapConfig {
    fn default() -> Self {
        Self {
            in_channels: GRID_CHANNELS,
            mid_channels: 16,
            kernel: 3,
            hidden: 32,
            out: TARGET_OUT,
            attention: true,
            hidden_activation: Activation::Tanh,
            renormalize: true,
        }
    }
}

impl CapConfig {
    /// Every stage affine in each individual parameter: no attention gate, no
    /// hidden nonlinearity, no quaternion renormalization.
    pub fn linear() -> Self {
        Self {
            attention: false,
            hidden_activation: Activation::Identity,
            renormalize: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = self.in_channels > 0
            && self.mid_channels > 0
            && self.hidden > 0
            && self.kernel % 2 == 1
            && (!self.renormalize || self.out >= 4);
        if ok {
            Ok(())
        } else {
            Err(LearnerError::Shape(format!("inconsistent head configuration {self:?}")))
        }
    }
}

/// Parameters of the head. Kernel layout is `[(dy * k + dx) * C_in + c] * C_mid + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapParams {
    pub cfg: CapConfig,
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// `[m * C_mid + n]` maps channel `n` of F to attention channel `m`.
    pub att_w: Vec<f64>,
    pub att_b: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

impl CapParams {
    pub fn zeros(cfg: CapConfig) -> Self {
        let (k2, ci, cm, h, o) = (cfg.kernel * cfg.kernel, cfg.in_channels, cfg.mid_channels, cfg.hidden, cfg.out);
        Self {
            cfg,
            conv_w: vec![0.0; k2 * ci * cm],
            conv_b: vec![0.0; cm],
            att_w: vec![0.0; cm * cm],
            att_b: vec![0.0; cm],
            w1: vec![0.0; h * cm],
            b1: vec![0.0; h],
            w2: vec![0.0; o * h],
            b2: vec![0.0; o],
        }
    }

    /// Glorot-uniform weights, zero biases except an identity-quaternion output bias.
    pub fn init(cfg: CapConfig, seed: u64) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(cfg);
        let (k2, ci, cm, h, o) = (cfg.kernel * cfg.kernel, cfg.in_channels, cfg.mid_channels, cfg.hidden, cfg.out);
        p.conv_w = uniform(&mut rng, p.conv_w.len(), k2 * ci, cm);
        p.att_w = uniform(&mut rng, p.att_w.len(), cm, cm);
        p.w1 = uniform(&mut rng, p.w1.len(), cm, h);
        p.w2 = uniform(&mut rng, p.w2.len(), h, o);
        if cfg.renormalize {
            p.b2[0] = 1.0;
        }
        Ok(p)
    }

    pub fn tensors(&self) -> [&Vec<f64>; 8] {
        [&self.conv_w, &self.conv_b, &self.att_w, &self.att_b, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.att_w,
            &mut self.att_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), LearnerError> {
        if values.len() != self.len() {
            return Err(LearnerError::Shape(format!("{} values for {} parameters", values.len(), self.len())));
        }
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    fn slot(&mut self, mut i: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Index range of the MLP tensors in [`CapParams::flat`] order.
    pub fn mlp_range(&self) -> std::ops::Range<usize> {
        let start = self.conv_w.len() + self.conv_b.len() + self.att_w.len() + self.att_b.len();
        start..self.len()
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CapTrace {
    /// `k² / n_valid` per cell; zero on masked cells.
    scale: Vec<f64>,
    pub features: Vec<f64>,
    pub attention: Vec<f64>,
    pub pooled: Vec<f64>,
    hidden: Vec<f64>,
    raw: Vec<f64>,
    pub output: Vec<f64>,
    valid: usize,
}

fn check_grid(cfg: &CapConfig, grid: &TokenGrid) -> Result<(), LearnerError> {
    if grid.channels() != cfg.in_channels {
        return Err(LearnerError::Shape(format!(
            "grid has {} channels, head expects {}",
            grid.channels(),
            cfg.in_channels
        )));
    }
    if grid.valid_count() == 0 {
        return Err(LearnerError::NoValidCells);
    }
    Ok(())
}

/// Rescales the quaternion block to unit length; identity when degenerate.
fn renormalize(raw: &[f64], out: &mut [f64]) {
    let n = raw[QUAT].iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1e-12 {
        for i in QUAT {
            out[i] = raw[i] / n;
        }
    } else {
        out[QUAT].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn cap_forward(params: &CapParams, grid: &TokenGrid) -> Result<Vec<f64>, LearnerError> {
    Ok(cap_forward_trace(params, grid)?.output)
}

pub fn cap_forward_trace(params: &CapParams, grid: &TokenGrid) -> Result<CapTrace, LearnerError> {
    let cfg = &params.cfg;
    check_grid(cfg, grid)?;
    let (h, w, ci, cm, k) = (grid.height(), grid.width(), cfg.in_channels, cfg.mid_channels, cfg.kernel);
    let r = (k / 2) as isize;
    let cells = h * w;
    let mut scale = vec![0.0; cells];
    let mut features = vec![0.0; cells * cm];
    let mut attention = vec![1.0; cells * cm];
    let mut pooled = vec![0.0; cm];
    let mut acc = vec![0.0; cm];
    for y in 0..h {
        for x in 0..w {
            if !grid.is_valid(y, x) {
                continue;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut n_valid = 0usize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qy, qx) = (y as isize + dy, x as isize + dx);
                    if qy < 0 || qx < 0 || qy >= h as isize || qx >= w as isize || !grid.is_valid(qy as usize, qx as usize) {
                        continue;
                    }
                    n_valid += 1;
                    let tap = ((dy + r) as usize * k + (dx + r) as usize) * ci;
                    let src = grid.cell(qy as usize, qx as usize);
                    for (c, xv) in src.iter().enumerate() {
                        let row = &params.conv_w[(tap + c) * cm..(tap + c + 1) * cm];
                        for (a, wv) in acc.iter_mut().zip(row) {
                            *a += wv * xv;
                        }
                    }
                }
            }
            let p = y * w + x;
            let s = (k * k) as f64 / n_valid as f64;
            scale[p] = s;
            let f = &mut features[p * cm..(p + 1) * cm];
            for m in 0..cm {
                f[m] = params.conv_b[m] + s * acc[m];
            }
            if cfg.attention {
                for m in 0..cm {
                    let z = params.att_b[m] + (0..cm).map(|n| params.att_w[m * cm + n] * f[n]).sum::<f64>();
                    attention[p * cm + m] = sigmoid(z);
                }
            }
            for m in 0..cm {
                pooled[m] += f[m] * attention[p * cm + m];
            }
        }
    }
    let valid = grid.valid_count();
    pooled.iter_mut().for_each(|v| *v /= valid as f64);
    let hidden: Vec<f64> = (0..cfg.hidden)
        .map(|j| {
            let z = params.b1[j] + (0..cm).map(|m| params.w1[j * cm + m] * pooled[m]).sum::<f64>();
            cfg.hidden_activation.apply(z)
        })
        .collect();
    let raw: Vec<f64> = (0..cfg.out)
        .map(|o| params.b2[o] + (0..cfg.hidden).map(|j| params.w2[o * cfg.hidden + j] * hidden[j]).sum::<f64>())
        .collect();
    let mut output = raw.clone();
    if cfg.renormalize {
        renormalize(&raw, &mut output);
    }
    Ok(CapTrace {
        scale,
        features,
        attention,
        pooled,
        hidden,
        raw,
        output,
        valid,
    })
}

/// Accumulates parameter gradients into `grads` given `d_out = dL/dT` and an
/// optional extra gradient on the pooled vector from another head. When
/// `d_grid` is given, input-feature gradients are accumulated into it.
pub fn cap_backward(
    params: &CapParams,
    grid: &TokenGrid,
    trace: &CapTrace,
    d_out: &[f64],
    d_pooled_extra: Option<&[f64]>,
    grads: &mut CapParams,
    mut d_grid: Option<&mut [f64]>,
) {
    let cfg = &params.cfg;
    let (h, w, ci, cm, k, hid) = (grid.height(), grid.width(), cfg.in_channels, cfg.mid_channels, cfg.kernel, cfg.hidden);
    let r = (k / 2) as isize;

    let mut d_raw = d_out.to_vec();
    if cfg.renormalize {
        let n = trace.raw[QUAT].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            // d(q/|q|) = (I - q̂ q̂ᵀ) / |q|
            let qh = &trace.output[QUAT];
            let dot: f64 = QUAT.map(|i| qh[i] * d_out[i]).sum();
            for i in QUAT {
                d_raw[i] = (d_out[i] - qh[i] * dot) / n;
            }
        } else {
            QUAT.for_each(|i| d_raw[i] = 0.0);
        }
    }

    let mut d_hidden = vec![0.0; hid];
    for o in 0..cfg.out {
        grads.b2[o] += d_raw[o];
        for j in 0..hid {
            grads.w2[o * hid + j] += d_raw[o] * trace.hidden[j];
            d_hidden[j] += params.w2[o * hid + j] * d_raw[o];
        }
    }
    let mut d_pooled = d_pooled_extra.map_or_else(|| vec![0.0; cm], |e| e.to_vec());
    for j in 0..hid {
        let dz = d_hidden[j] * cfg.hidden_activation.slope(trace.hidden[j]);
        grads.b1[j] += dz;
        for m in 0..cm {
            grads.w1[j * cm + m] += dz * trace.pooled[m];
            d_pooled[m] += params.w1[j * cm + m] * dz;
        }
    }

    let inv = 1.0 / trace.valid as f64;
    let mut d_f = vec![0.0; cm];
    let mut d_z = vec![0.0; cm];
    for y in 0..h {
        for x in 0..w {
            if !grid.is_valid(y, x) {
                continue;
            }
            let p = y * w + x;
            let f = &trace.features[p * cm..(p + 1) * cm];
            let att = &trace.attention[p * cm..(p + 1) * cm];
            for m in 0..cm {
                d_f[m] = d_pooled[m] * inv * att[m];
            }
            if cfg.attention {
                for m in 0..cm {
                    let d_att = d_pooled[m] * inv * f[m];
                    let dz = d_att * att[m] * (1.0 - att[m]);
                    grads.att_b[m] += dz;
                    for n in 0..cm {
                        grads.att_w[m * cm + n] += dz * f[n];
                        d_f[n] += params.att_w[m * cm + n] * dz;
                    }
                }
            }
            let s = trace.scale[p];
            for m in 0..cm {
                grads.conv_b[m] += d_f[m];
                d_z[m] = s * d_f[m];
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qy, qx) = (y as isize + dy, x as isize + dx);
                    if qy < 0 || qx < 0 || qy >= h as isize || qx >= w as isize || !grid.is_valid(qy as usize, qx as usize) {
                        continue;
                    }
                    let tap = ((dy + r) as usize * k + (dx + r) as usize) * ci;
                    let src = grid.cell(qy as usize, qx as usize);
                    for (c, xv) in src.iter().enumerate() {
                        let base = (tap + c) * cm;
                        for m in 0..cm {
                            grads.conv_w[base + m] += d_z[m] * xv;
                        }
                    }
                    if let Some(dg) = d_grid.as_deref_mut() {
                        let q = (qy as usize * w + qx as usize) * ci;
                        for c in 0..ci {
                            let base = (tap + c) * cm;
                            dg[q + c] += (0..cm).map(|m| params.conv_w[base + m] * d_z[m]).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
}

/// Mean squared error over components.
pub fn cap_loss(t: &[f64], t_gt: &[f64]) -> Result<f64, LearnerError> {
    if t.len() != t_gt.len() || t.is_empty() {
        return Err(LearnerError::Shape(format!("loss over {} and {} components", t.len(), t_gt.len())));
    }
    Ok(t.iter().zip(t_gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64)
}

pub fn cap_loss_grad(t: &[f64], t_gt: &[f64]) -> Vec<f64> {
    let n = t.len() as f64;
    t.iter().zip(t_gt).map(|(a, b)| 2.0 * (a - b) / n).collect()
}

/// Weighted objective `L_action + alpha * L_cap`.
pub fn total_loss(l_action: f64, l_cap: f64, alpha: f64) -> f64 {
    l_action + alpha * l_cap
}

/// Analytic and numeric gradient of the loss at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradSample {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// Relative error. Gradients smaller than [`GRAD_FLOOR`] are compared in
    /// absolute terms: at `h = 1e-4` one ulp of an O(1) loss already moves
    /// the central difference by about 1e-12.
    pub fn relative_error(&self) -> f64 {
        let den = self.analytic.abs().max(self.numeric.abs()).max(GRAD_FLOOR);
        (self.analytic - self.numeric).abs() / den
    }
}

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_FLOOR: f64 = 1e-2;

/// Gradient of `cap_loss(cap_forward(params, grid), label)` with respect to every parameter.
pub fn loss_gradient(params: &CapParams, grid: &TokenGrid, label: &[f64]) -> Result<(f64, CapParams), LearnerError> {
    let trace = cap_forward_trace(params, grid)?;
    let loss = cap_loss(&trace.output, label)?;
    let mut grads = CapParams::zeros(params.cfg);
    cap_backward(params, grid, &trace, &cap_loss_grad(&trace.output, label), None, &mut grads, None);
    Ok((loss, grads))
}

/// Compares the analytic gradient against central differences on `samples`
/// randomly chosen parameters.
pub fn grad_check_samples(
    params: &CapParams,
    grid: &TokenGrid,
    label: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<GradSample>, LearnerError> {
    let (_, grads) = loss_gradient(params, grid, label)?;
    let analytic = grads.flat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let i = rng.random_range(0..analytic.len());
        let orig = *probe.slot(i);
        *probe.slot(i) = orig + FD_STEP;
        let plus = cap_loss(&cap_forward(&probe, grid)?, label)?;
        *probe.slot(i) = orig - FD_STEP;
        let minus = cap_loss(&cap_forward(&probe, grid)?, label)?;
        *probe.slot(i) = orig;
        out.push(GradSample {
            index: i,
            analytic: analytic[i],
            numeric: (plus - minus) / (2.0 * FD_STEP),
        });
    }
    Ok(out)
}

/// Largest relative error over a random parameter subset.
pub fn grad_check(params: &CapParams, grid: &TokenGrid, label: &[f64], samples: usize, seed: u64) -> Result<f64, LearnerError> {
    Ok(grad_check_samples(params, grid, label, samples, seed)?
        .iter()
        .map(GradSample::relative_error)
        .fold(0.0, f64::max))
}

/// Gradient of the loss with respect to the grid features.
pub fn input_gradient(params: &CapParams, grid: &TokenGrid, label: &[f64]) -> Result<Vec<f64>, LearnerError> {
    let trace = cap_forward_trace(params, grid)?;
    let mut grads = CapParams::zeros(params.cfg);
    let mut d_grid = vec![0.0; grid.features().len()];
    cap_backward(
        params,
        grid,
        &trace,
        &cap_loss_grad(&trace.output, label),
        None,
        &mut grads,
        Some(&mut d_grid),
    );
    Ok(d_grid)
}
