//! Forward and backward kernels for the layer primitives.
//!
//! Sequence tensors use the `batch x channels x length` layout throughout.

use rand::Rng as _;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // Keep the output strictly inside (0, 1).
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of sigmoid given its output.
pub fn sigmoid_backward(out: &Tensor, grad: &Tensor) -> Result<Tensor> {
    out.zip_map(grad, |s, g| g * s * (1.0 - s))
}

/// Gradient of tanh given its output.
pub fn tanh_backward(out: &Tensor, grad: &Tensor) -> Result<Tensor> {
    out.zip_map(grad, |t, g| g * (1.0 - t * t))
}

/// Gradient of ReLU given its input.
pub fn relu_backward(input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    input.zip_map(grad, |x, g| if x > 0.0 { g } else { 0.0 })
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::invalid(format!(
            "{op}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// `x · Wᵀ + b` with `x: B×I`, `W: O×I`, `b: O`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank("dense", x, 2)?;
    expect_rank("dense", w, 2)?;
    let (batch, inputs) = (x.dim(0), x.dim(1));
    let outputs = w.dim(0);
    if w.dim(1) != inputs {
        return Err(Error::shape("dense", x.shape(), w.shape()));
    }
    if b.len() != outputs {
        return Err(Error::shape("dense bias", w.shape(), b.shape()));
    }
    let mut out = vec![0.0; batch * outputs];
    for row in out.chunks_mut(outputs.max(1)).take(batch) {
        row.copy_from_slice(b.data());
    }
    gemm(batch, inputs, outputs, x.data(), false, w.data(), true, 1.0, &mut out);
    Tensor::new(vec![batch, outputs], out)
}

/// Returns `(dx, dW, db)`.
pub fn dense_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, inputs) = (x.dim(0), x.dim(1));
    let outputs = w.dim(0);
    if grad.shape() != [batch, outputs] {
        return Err(Error::shape("dense backward", grad.shape(), &[batch, outputs]));
    }
    let mut dx = vec![0.0; batch * inputs];
    gemm(batch, outputs, inputs, grad.data(), false, w.data(), false, 0.0, &mut dx);
    let mut dw = vec![0.0; outputs * inputs];
    gemm(outputs, batch, inputs, grad.data(), true, x.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; outputs];
    for row in grad.data().chunks(outputs.max(1)).take(batch) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok((
        Tensor::new(vec![batch, inputs], dx)?,
        Tensor::new(vec![outputs, inputs], dw)?,
        Tensor::new(vec![outputs], db)?,
    ))
}

/// Unfolds one `C×L` sample into a `(C·K)×L` column matrix with zero padding.
fn im2col(sample: &[f64], channels: usize, len: usize, kernel: usize) -> Vec<f64> {
    let pad = (kernel - 1) / 2;
    let mut cols = vec![0.0; channels * kernel * len];
    for c in 0..channels {
        let src = &sample[c * len..(c + 1) * len];
        for k in 0..kernel {
            let dst = &mut cols[(c * kernel + k) * len..(c * kernel + k + 1) * len];
            for (t, d) in dst.iter_mut().enumerate() {
                let pos = t + k;
                if pos >= pad && pos - pad < len {
                    *d = src[pos - pad];
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, len: usize, kernel: usize, out: &mut [f64]) {
    let pad = (kernel - 1) / 2;
    for c in 0..channels {
        for k in 0..kernel {
            let src = &cols[(c * kernel + k) * len..(c * kernel + k + 1) * len];
            for (t, &v) in src.iter().enumerate() {
                let pos = t + k;
                if pos >= pad && pos - pad < len {
                    out[c * len + pos - pad] += v;
                }
            }
        }
    }
}

fn check_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    expect_rank("conv1d", x, 3)?;
    expect_rank("conv1d", w, 3)?;
    let (batch, channels, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (filters, w_channels, kernel) = (w.dim(0), w.dim(1), w.dim(2));
    if kernel % 2 == 0 {
        return Err(Error::invalid(format!(
            "conv1d same padding needs an odd kernel, got {kernel}"
        )));
    }
    if w_channels != channels {
        return Err(Error::shape("conv1d channels", x.shape(), w.shape()));
    }
    if b.len() != filters {
        return Err(Error::shape("conv1d bias", w.shape(), b.shape()));
    }
    Ok((batch, channels, len, filters, kernel))
}

/// Same-padded cross-correlation: `x: B×C×L`, `W: F×C×K` (K odd), `b: F`.
pub fn conv1d_same_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, channels, len, filters, kernel) = check_conv(x, w, b)?;
    let mut out = vec![0.0; batch * filters * len];
    for (n, y) in out.chunks_mut(filters * len).enumerate().take(batch) {
        let cols = im2col(&x.data()[n * channels * len..(n + 1) * channels * len], channels, len, kernel);
        for (f, row) in y.chunks_mut(len).enumerate() {
            row.fill(b.data()[f]);
        }
        gemm(filters, channels * kernel, len, w.data(), false, &cols, false, 1.0, y);
    }
    Tensor::new(vec![batch, filters, len], out)
}

/// Returns `(dx, dW, db)`.
pub fn conv1d_same_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let b = Tensor::zeros(&[w.dim(0)]);
    let (batch, channels, len, filters, kernel) = check_conv(x, w, &b)?;
    if grad.shape() != [batch, filters, len] {
        return Err(Error::shape("conv1d backward", grad.shape(), &[batch, filters, len]));
    }
    let ck = channels * kernel;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; filters];
    let mut dcols = vec![0.0; ck * len];
    for n in 0..batch {
        let xs = &x.data()[n * channels * len..(n + 1) * channels * len];
        let g = &grad.data()[n * filters * len..(n + 1) * filters * len];
        let cols = im2col(xs, channels, len, kernel);
        gemm(filters, len, ck, g, false, &cols, true, 1.0, &mut dw);
        gemm(ck, filters, len, w.data(), true, g, false, 0.0, &mut dcols);
        col2im(&dcols, channels, len, kernel, &mut dx[n * channels * len..(n + 1) * channels * len]);
        for (f, row) in g.chunks(len).enumerate() {
            db[f] += row.iter().sum::<f64>();
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![filters], db)?,
    ))
}

/// Output length of a valid (unpadded) pooling window sweep.
pub fn pool_output_len(len: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("pool window and stride must be >= 1"));
    }
    if window > len {
        return Err(Error::invalid(format!(
            "pool window {window} exceeds sequence length {len}"
        )));
    }
    Ok((len - window) / stride + 1)
}

/// Max pooling over the last axis. Returns the pooled tensor and, for every
/// output element, the flat index of the winning input element. Ties keep the
/// first index.
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    expect_rank("maxpool1d", x, 3)?;
    let (batch, channels, len) = (x.dim(0), x.dim(1), x.dim(2));
    let out_len = pool_output_len(len, window, stride)?;
    let mut out = Vec::with_capacity(batch * channels * out_len);
    let mut argmax = Vec::with_capacity(out.capacity());
    for row in 0..batch * channels {
        let base = row * len;
        for o in 0..out_len {
            let start = base + o * stride;
            let mut best = start;
            for i in start + 1..start + window {
                if x.data()[i] > x.data()[best] {
                    best = i;
                }
            }
            out.push(x.data()[best]);
            argmax.push(best);
        }
    }
    Ok((Tensor::new(vec![batch, channels, out_len], out)?, argmax))
}

pub fn maxpool1d_backward(input_shape: &[usize], argmax: &[usize], grad: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad.len() {
        return Err(Error::invalid("maxpool backward: argmax/grad length mismatch"));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad.data()) {
        dx.data_mut()[idx] += g;
    }
    Ok(dx)
}

fn adaptive_bin(i: usize, len: usize, out_len: usize) -> (usize, usize) {
    (i * len / out_len, (i + 1) * len / out_len)
}

/// Mean over the contiguous bins `[⌊i·L/out⌋, ⌊(i+1)·L/out⌋)`.
pub fn adaptive_avg_pool1d(x: &Tensor, out_len: usize) -> Result<Tensor> {
    expect_rank("adaptive_avg_pool1d", x, 3)?;
    let (batch, channels, len) = (x.dim(0), x.dim(1), x.dim(2));
    if out_len == 0 || out_len > len {
        return Err(Error::invalid(format!(
            "adaptive pool output length must be in [1, {len}], got {out_len}"
        )));
    }
    let mut out = Vec::with_capacity(batch * channels * out_len);
    for row in x.data().chunks(len).take(batch * channels) {
        for i in 0..out_len {
            let (s, e) = adaptive_bin(i, len, out_len);
            out.push(row[s..e].iter().sum::<f64>() / (e - s) as f64);
        }
    }
    Tensor::new(vec![batch, channels, out_len], out)
}

pub fn adaptive_avg_pool1d_backward(input_shape: &[usize], grad: &Tensor) -> Result<Tensor> {
    let len = input_shape[2];
    let out_len = grad.dim(2);
    let mut dx = Tensor::zeros(input_shape);
    for (row, g) in dx.data_mut().chunks_mut(len).zip(grad.data().chunks(out_len)) {
        for (i, &gv) in g.iter().enumerate() {
            let (s, e) = adaptive_bin(i, len, out_len);
            let share = gv / (e - s) as f64;
            row[s..e].iter_mut().for_each(|v| *v += share);
        }
    }
    Ok(dx)
}

/// Feature axis layout for batch normalization: `B×F` or `B×C×L`.
fn bn_layout(x: &Tensor) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, f] => Ok((*b, *f, 1)),
        [b, c, l] => Ok((*b, *c, *l)),
        s => Err(Error::invalid(format!("batchnorm: unsupported shape {s:?}"))),
    }
}

#[inline]
fn bn_index(n: usize, f: usize, t: usize, features: usize, len: usize) -> usize {
    (n * features + f) * len + t
}

/// Per-feature statistics of a batch-norm forward pass, kept for backward.
#[derive(Clone, Debug)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub normalized: Tensor,
}

/// Batch normalization. In train mode the batch mean and population variance
/// are used and `running_mean`/`running_var` are updated in place as
/// `running = momentum·running + (1−momentum)·batch`. In infer mode the
/// running statistics are used and left untouched.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm1d(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut [f64],
    running_var: &mut [f64],
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<(Tensor, BatchNormStats)> {
    let (batch, features, len) = bn_layout(x)?;
    if gamma.len() != features || beta.len() != features {
        return Err(Error::shape("batchnorm params", x.shape(), gamma.shape()));
    }
    if running_mean.len() != features || running_var.len() != features {
        return Err(Error::invalid("batchnorm: running statistics width mismatch"));
    }
    let (mean, var) = match mode {
        Mode::Train => {
            if batch < 2 {
                return Err(Error::invalid("batchnorm train mode needs a batch of at least 2"));
            }
            let count = (batch * len) as f64;
            let mut mean = vec![0.0; features];
            let mut var = vec![0.0; features];
            for f in 0..features {
                let mut s = 0.0;
                for n in 0..batch {
                    for t in 0..len {
                        s += x.data()[bn_index(n, f, t, features, len)];
                    }
                }
                let m = s / count;
                let mut v = 0.0;
                for n in 0..batch {
                    for t in 0..len {
                        let d = x.data()[bn_index(n, f, t, features, len)] - m;
                        v += d * d;
                    }
                }
                mean[f] = m;
                var[f] = v / count;
            }
            for f in 0..features {
                running_mean[f] = momentum * running_mean[f] + (1.0 - momentum) * mean[f];
                running_var[f] = momentum * running_var[f] + (1.0 - momentum) * var[f];
            }
            (mean, var)
        }
        Mode::Infer => (running_mean.to_vec(), running_var.to_vec()),
    };
    let mut normalized = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    for n in 0..batch {
        for f in 0..features {
            let inv = 1.0 / (var[f] + eps).sqrt();
            for t in 0..len {
                let i = bn_index(n, f, t, features, len);
                let xh = (x.data()[i] - mean[f]) * inv;
                normalized.data_mut()[i] = xh;
                out.data_mut()[i] = gamma.data()[f] * xh + beta.data()[f];
            }
        }
    }
    Ok((out, BatchNormStats { mean, var, normalized }))
}

/// Backward pass of train-mode batch normalization. Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm1d_backward(
    stats: &BatchNormStats,
    gamma: &Tensor,
    grad: &Tensor,
    mode: Mode,
    eps: f64,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, features, len) = bn_layout(grad)?;
    let xh = &stats.normalized;
    let count = (batch * len) as f64;
    let mut dx = Tensor::zeros(grad.shape());
    let mut dgamma = vec![0.0; features];
    let mut dbeta = vec![0.0; features];
    for f in 0..features {
        let inv = 1.0 / (stats.var[f] + eps).sqrt();
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for n in 0..batch {
            for t in 0..len {
                let i = bn_index(n, f, t, features, len);
                sum_g += grad.data()[i];
                sum_gx += grad.data()[i] * xh.data()[i];
            }
        }
        dgamma[f] = sum_gx;
        dbeta[f] = sum_g;
        let g = gamma.data()[f];
        for n in 0..batch {
            for t in 0..len {
                let i = bn_index(n, f, t, features, len);
                dx.data_mut()[i] = match mode {
                    Mode::Infer => g * inv * grad.data()[i],
                    Mode::Train => {
                        g * inv / count
                            * (count * grad.data()[i] - sum_g - xh.data()[i] * sum_gx)
                    }
                };
            }
        }
    }
    Ok((
        dx,
        Tensor::new(vec![features], dgamma)?,
        Tensor::new(vec![features], dbeta)?,
    ))
}

/// Inverted dropout. Returns the output and the multiplicative mask (entries
/// are `0` or `1/(1−rate)`); in infer mode the mask is all ones.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), Tensor::full(x.shape(), 1.0)));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask = x.map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale });
    let out = x.zip_map(&mask, |a, m| a * m)?;
    Ok((out, mask))
}

/// Intermediate values of one LSTM step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct LstmStep {
    /// `[x_t, h_prev]`, `B×(I+H)`.
    pub concat: Vec<f64>,
    /// Activated gates `i, f, g, o`, `B×4H`.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step with gates `i, f, g, o` stacked in that order.
///
/// `w` is `4H×(I+H)` acting on `[x_t, h_prev]`, `b` is `4H`.
/// `c_t = f⊙c_prev + i⊙g`, `h_t = o⊙tanh(c_t)`.
pub fn lstm_cell(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor, LstmStep)> {
    expect_rank("lstm_cell", x_t, 2)?;
    let batch = x_t.dim(0);
    let inputs = x_t.dim(1);
    let hidden = b.len() / 4;
    if b.len() != 4 * hidden || w.shape() != [4 * hidden, inputs + hidden] {
        return Err(Error::shape("lstm_cell weights", w.shape(), &[4 * hidden, inputs + hidden]));
    }
    if h_prev.shape() != [batch, hidden] || c_prev.shape() != [batch, hidden] {
        return Err(Error::shape("lstm_cell state", h_prev.shape(), &[batch, hidden]));
    }
    let step = lstm_step(x_t.data(), h_prev.data(), c_prev.data(), batch, inputs, hidden, w.data(), b.data());
    let h: Vec<f64> = step
        .tanh_c
        .iter()
        .enumerate()
        .map(|(idx, &tc)| {
            let (n, j) = (idx / hidden, idx % hidden);
            step.gates[n * 4 * hidden + 3 * hidden + j] * tc
        })
        .collect();
    Ok((
        Tensor::new(vec![batch, hidden], h)?,
        Tensor::new(vec![batch, hidden], step.c.clone())?,
        step,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    batch: usize,
    inputs: usize,
    hidden: usize,
    w: &[f64],
    b: &[f64],
) -> LstmStep {
    let width = inputs + hidden;
    let mut concat = vec![0.0; batch * width];
    for n in 0..batch {
        concat[n * width..n * width + inputs].copy_from_slice(&x_t[n * inputs..(n + 1) * inputs]);
        concat[n * width + inputs..(n + 1) * width]
            .copy_from_slice(&h_prev[n * hidden..(n + 1) * hidden]);
    }
    let g4 = 4 * hidden;
    let mut gates = vec![0.0; batch * g4];
    for row in gates.chunks_mut(g4) {
        row.copy_from_slice(b);
    }
    gemm(batch, width, g4, &concat, false, w, true, 1.0, &mut gates);
    let mut c = vec![0.0; batch * hidden];
    let mut tanh_c = vec![0.0; batch * hidden];
    for n in 0..batch {
        let row = &mut gates[n * g4..(n + 1) * g4];
        for j in 0..hidden {
            row[j] = sigmoid_scalar(row[j]);
            row[hidden + j] = sigmoid_scalar(row[hidden + j]);
            row[2 * hidden + j] = row[2 * hidden + j].tanh();
            row[3 * hidden + j] = sigmoid_scalar(row[3 * hidden + j]);
            let idx = n * hidden + j;
            c[idx] = row[hidden + j] * c_prev[idx] + row[j] * row[2 * hidden + j];
            tanh_c[idx] = c[idx].tanh();
        }
    }
    LstmStep {
        concat,
        gates,
        c_prev: c_prev.to_vec(),
        c,
        tanh_c,
    }
}

/// Backward through one LSTM step. Accumulates into `dw`/`db` and returns
/// `(dx_t, dh_prev, dc_prev)` as flat buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    step: &LstmStep,
    dh: &[f64],
    dc_next: &[f64],
    batch: usize,
    inputs: usize,
    hidden: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g4 = 4 * hidden;
    let width = inputs + hidden;
    let mut dgates = vec![0.0; batch * g4];
    let mut dc_prev = vec![0.0; batch * hidden];
    for n in 0..batch {
        let gates = &step.gates[n * g4..(n + 1) * g4];
        let dg = &mut dgates[n * g4..(n + 1) * g4];
        for j in 0..hidden {
            let idx = n * hidden + j;
            let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let tc = step.tanh_c[idx];
            let d_o = dh[idx] * tc;
            let dc = dc_next[idx] + dh[idx] * o * (1.0 - tc * tc);
            dc_prev[idx] = dc * f;
            dg[j] = dc * g * i * (1.0 - i);
            dg[hidden + j] = dc * step.c_prev[idx] * f * (1.0 - f);
            dg[2 * hidden + j] = dc * i * (1.0 - g * g);
            dg[3 * hidden + j] = d_o * o * (1.0 - o);
        }
    }
    gemm(g4, batch, width, &dgates, true, &step.concat, false, 1.0, dw);
    for row in dgates.chunks(g4) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dconcat = vec![0.0; batch * width];
    gemm(batch, g4, width, &dgates, false, w, false, 0.0, &mut dconcat);
    let mut dx = vec![0.0; batch * inputs];
    let mut dh_prev = vec![0.0; batch * hidden];
    for n in 0..batch {
        dx[n * inputs..(n + 1) * inputs].copy_from_slice(&dconcat[n * width..n * width + inputs]);
        dh_prev[n * hidden..(n + 1) * hidden]
            .copy_from_slice(&dconcat[n * width + inputs..(n + 1) * width]);
    }
    (dx, dh_prev, dc_prev)
}

/// Number of parameters of an LSTM cell with a single bias per gate.
pub fn lstm_param_count(inputs: usize, hidden: usize) -> usize {
    4 * hidden * (inputs + hidden) + 4 * hidden
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e−12, 1−1e−12]`.
pub fn bce_loss(p: &Tensor, y: &Tensor) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::shape("bce_loss", p.shape(), y.shape()));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = p
        .data()
        .iter()
        .zip(y.data())
        .map(|(&p, &y)| {
            let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}
