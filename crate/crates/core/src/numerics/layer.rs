use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::{self, BatchNormStats, LstmStep, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

/// Hyperparameters of a layer. Parameters live in [`LayerParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// Multiplies every input by `factor`.
    Scale { factor: f64 },
    /// Index lookup: `B×L` indices to `B×dim×L` vectors.
    Embedding { vocab: usize, dim: usize },
    Dense { inputs: usize, outputs: usize },
    Conv1d { channels: usize, filters: usize, kernel: usize },
    BatchNorm { features: usize, eps: f64, momentum: f64 },
    Dropout { rate: f64 },
    MaxPool { window: usize, stride: usize },
    AdaptiveAvgPool { out_len: usize },
    /// Consumes a `B×I×T` sequence and emits the last hidden state, `B×H`
    /// (or `B×2H` when bidirectional: forward then backward direction).
    Lstm { inputs: usize, hidden: usize, bidirectional: bool },
    Activation(Activation),
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Ordered, named parameter tensors of one layer. Shapes are fixed at
/// construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    entries: Vec<Param>,
}

impl LayerParams {
    pub fn new(entries: Vec<Param>) -> Self {
        Self { entries }
    }

    fn push(&mut self, name: &str, value: Tensor, trainable: bool) {
        self.entries.push(Param {
            name: name.to_string(),
            value,
            trainable,
        });
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].value
    }

    /// Main weight tensor (first entry), if any.
    pub fn weights(&self) -> Option<&Tensor> {
        self.entries.first().map(|p| &p.value)
    }

    pub fn biases(&self) -> Option<&Tensor> {
        self.entries.get(1).map(|p| &p.value)
    }

    /// Replaces the value of entry `i`, rejecting shape changes.
    pub fn set(&mut self, i: usize, value: Tensor) -> Result<()> {
        let slot = &mut self.entries[i];
        if slot.value.shape() != value.shape() {
            return Err(Error::shape("param update", slot.value.shape(), value.shape()));
        }
        slot.value = value;
        Ok(())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn count(&self) -> (usize, usize) {
        self.entries.iter().fold((0, 0), |(t, n), p| {
            if p.trainable {
                (t + p.value.len(), n)
            } else {
                (t, n + p.value.len())
            }
        })
    }
}

/// Gradients of one backward step. `wrt_params` is aligned with the layer's
/// [`LayerParams`] entries; non-trainable entries get zeros.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub wrt_input: Tensor,
    pub wrt_params: Vec<Tensor>,
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub enum Cache {
    Input(Tensor),
    Output(Tensor),
    Shape(Vec<usize>),
    BatchNorm { stats: BatchNormStats, mode: Mode },
    Dropout(Tensor),
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Lstm(Vec<LstmTrace>),
}

/// Per-direction record of an LSTM pass over a sequence.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    steps: Vec<LstmStep>,
    reversed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    params: LayerParams,
}

fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

impl Layer {
    /// Creates a layer with freshly initialized parameters: Glorot-uniform
    /// weights, zero biases, LSTM forget-gate bias 1, embeddings
    /// uniform in ±0.05.
    pub fn new(name: impl Into<String>, kind: LayerKind, rng: &mut Rng) -> Result<Self> {
        let mut params = LayerParams::default();
        match &kind {
            LayerKind::Embedding { vocab, dim } => {
                if *vocab == 0 || *dim == 0 {
                    return Err(Error::invalid("embedding needs vocab and dim >= 1"));
                }
                let data = (0..vocab * dim).map(|_| rng.gen_range(-0.05..0.05)).collect();
                params.push("embeddings", Tensor::new(vec![*vocab, *dim], data)?, true);
            }
            LayerKind::Dense { inputs, outputs } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err(Error::invalid("dense needs non-zero widths"));
                }
                params.push("kernel", glorot(rng, &[*outputs, *inputs], *inputs, *outputs), true);
                params.push("bias", Tensor::zeros(&[*outputs]), true);
            }
            LayerKind::Conv1d { channels, filters, kernel } => {
                if kernel % 2 == 0 {
                    return Err(Error::invalid(format!("conv kernel must be odd, got {kernel}")));
                }
                let w = glorot(rng, &[*filters, *channels, *kernel], channels * kernel, filters * kernel);
                params.push("kernel", w, true);
                params.push("bias", Tensor::zeros(&[*filters]), true);
            }
            LayerKind::BatchNorm { features, .. } => {
                params.push("gamma", Tensor::full(&[*features], 1.0), true);
                params.push("beta", Tensor::zeros(&[*features]), true);
                params.push("moving_mean", Tensor::zeros(&[*features]), false);
                params.push("moving_variance", Tensor::full(&[*features], 1.0), false);
            }
            LayerKind::Lstm { inputs, hidden, bidirectional } => {
                let directions: &[&str] = if *bidirectional { &["", "_reverse"] } else { &[""] };
                for suffix in directions {
                    let w = glorot(rng, &[4 * hidden, inputs + hidden], inputs + hidden, 4 * hidden);
                    let mut b = Tensor::zeros(&[4 * hidden]);
                    b.data_mut()[*hidden..2 * hidden].fill(1.0);
                    params.push(&format!("kernel{suffix}"), w, true);
                    params.push(&format!("bias{suffix}"), b, true);
                }
            }
            LayerKind::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
            }
            LayerKind::MaxPool { window, stride } if *window == 0 || *stride == 0 => {
                return Err(Error::invalid("pool window and stride must be >= 1"));
            }
            LayerKind::AdaptiveAvgPool { out_len: 0 } => {
                return Err(Error::invalid("adaptive pool output length must be >= 1"));
            }
            _ => {}
        }
        Ok(Self {
            name: name.into(),
            kind,
            params,
        })
    }

    pub fn with_params(name: impl Into<String>, kind: LayerKind, params: LayerParams) -> Self {
        Self {
            name: name.into(),
            kind,
            params,
        }
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    /// `(trainable, non_trainable)` parameter counts.
    pub fn param_count(&self) -> (usize, usize) {
        self.params.count()
    }

    /// Output shape (without the batch axis) for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::invalid(format!("{}: unexpected input shape {input:?}", self.name));
        Ok(match (&self.kind, input) {
            (LayerKind::Embedding { dim, .. }, [len]) => vec![*dim, *len],
            (LayerKind::Dense { inputs, outputs }, [i]) if i == inputs => vec![*outputs],
            (LayerKind::Conv1d { channels, filters, .. }, [c, l]) if c == channels => vec![*filters, *l],
            (LayerKind::MaxPool { window, stride }, [c, l]) => {
                vec![*c, ops::pool_output_len(*l, *window, *stride)?]
            }
            (LayerKind::AdaptiveAvgPool { out_len }, [c, l]) if out_len <= l => vec![*c, *out_len],
            (LayerKind::Lstm { inputs, hidden, bidirectional }, [i, _]) if i == inputs => {
                vec![if *bidirectional { 2 * hidden } else { *hidden }]
            }
            (LayerKind::Flatten, s) => vec![s.iter().product()],
            (LayerKind::BatchNorm { features, .. }, s) if s.first() == Some(features) => s.to_vec(),
            (
                LayerKind::Scale { .. } | LayerKind::Dropout { .. } | LayerKind::Activation(_),
                s,
            ) => s.to_vec(),
            _ => return Err(bad()),
        })
    }

    /// Inference-mode forward pass; no state is touched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut unused = crate::rng::seeded(0);
        Ok(run(&self.kind, &self.params, x, Mode::Infer, &mut unused)?.0)
    }

    /// Forward pass that records a cache for [`Layer::backward`]. In train
    /// mode batch-norm running statistics are updated.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Cache)> {
        let (y, cache, update) = run(&self.kind, &self.params, x, mode, rng)?;
        if let Some((mean, var)) = update {
            self.params.set(2, mean)?;
            self.params.set(3, var)?;
        }
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &Cache, grad: &Tensor) -> Result<LayerGrad> {
        backward(&self.kind, &self.params, cache, grad)
    }
}

/// Running-statistics update produced by a train-mode batch-norm pass.
type StatsUpdate = Option<(Tensor, Tensor)>;

fn run(
    kind: &LayerKind,
    params: &LayerParams,
    x: &Tensor,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Cache, StatsUpdate)> {
    let mut update = None;
    let out = match kind {
        LayerKind::Scale { factor } => (x.map(|v| v * factor), Cache::Shape(x.shape().to_vec())),
        LayerKind::Embedding { vocab, dim } => {
            (embedding_forward(x, params.tensor(0), *vocab, *dim)?, Cache::Input(x.clone()))
        }
        LayerKind::Dense { .. } => (
            ops::dense_forward(x, params.tensor(0), params.tensor(1))?,
            Cache::Input(x.clone()),
        ),
        LayerKind::Conv1d { .. } => (
            ops::conv1d_same_forward(x, params.tensor(0), params.tensor(1))?,
            Cache::Input(x.clone()),
        ),
        LayerKind::BatchNorm { eps, momentum, .. } => {
            let (gamma, beta) = (params.tensor(0).clone(), params.tensor(1).clone());
            let mut rm = params.tensor(2).clone();
            let mut rv = params.tensor(3).clone();
            let (y, stats) =
                ops::batchnorm1d(x, &gamma, &beta, rm.data_mut(), rv.data_mut(), mode, *eps, *momentum)?;
            if mode == Mode::Train {
                update = Some((rm, rv));
            }
            (y, Cache::BatchNorm { stats, mode })
        }
        LayerKind::Dropout { rate } => {
            let (y, mask) = ops::dropout(x, *rate, mode, rng)?;
            (y, Cache::Dropout(mask))
        }
        LayerKind::MaxPool { window, stride } => {
            let (y, argmax) = ops::maxpool1d(x, *window, *stride)?;
            (
                y,
                Cache::MaxPool {
                    input_shape: x.shape().to_vec(),
                    argmax,
                },
            )
        }
        LayerKind::AdaptiveAvgPool { out_len } => (
            ops::adaptive_avg_pool1d(x, *out_len)?,
            Cache::Shape(x.shape().to_vec()),
        ),
        LayerKind::Lstm { inputs, hidden, bidirectional } => {
            lstm_sequence_forward(x, params, *inputs, *hidden, *bidirectional)?
        }
        LayerKind::Activation(act) => match act {
            Activation::Relu => (ops::relu(x), Cache::Input(x.clone())),
            Activation::Sigmoid => {
                let y = ops::sigmoid(x);
                (y.clone(), Cache::Output(y))
            }
            Activation::Tanh => {
                let y = ops::tanh_act(x);
                (y.clone(), Cache::Output(y))
            }
        },
        LayerKind::Flatten => {
            let batch = x.shape().first().copied().unwrap_or(0);
            let rest: usize = x.shape().iter().skip(1).product();
            (x.clone().reshape(&[batch, rest])?, Cache::Shape(x.shape().to_vec()))
        }
    };
    Ok((out.0, out.1, update))
}

fn embedding_forward(x: &Tensor, table: &Tensor, vocab: usize, dim: usize) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::invalid(format!("embedding expects B×L indices, got {:?}", x.shape())));
    }
    let (batch, len) = (x.dim(0), x.dim(1));
    let mut out = vec![0.0; batch * dim * len];
    for n in 0..batch {
        for t in 0..len {
            let idx = checked_index(x.data()[n * len + t], vocab, n, t)?;
            let row = &table.data()[idx * dim..(idx + 1) * dim];
            for (d, &v) in row.iter().enumerate() {
                out[(n * dim + d) * len + t] = v;
            }
        }
    }
    Tensor::new(vec![batch, dim, len], out)
}

fn checked_index(v: f64, vocab: usize, row: usize, column: usize) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || v >= vocab as f64 {
        return Err(Error::IndexOutOfRange {
            row,
            column,
            value: v.max(0.0) as usize,
            vocab,
        });
    }
    Ok(v as usize)
}

/// Slices time step `t` out of a `B×I×T` tensor as a `B×I` buffer.
fn time_slice(x: &Tensor, t: usize) -> Vec<f64> {
    let (batch, inputs, len) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = Vec::with_capacity(batch * inputs);
    for n in 0..batch {
        for i in 0..inputs {
            out.push(x.data()[(n * inputs + i) * len + t]);
        }
    }
    out
}

fn lstm_sequence_forward(
    x: &Tensor,
    params: &LayerParams,
    inputs: usize,
    hidden: usize,
    bidirectional: bool,
) -> Result<(Tensor, Cache)> {
    if x.rank() != 3 || x.dim(1) != inputs {
        return Err(Error::shape("lstm input", x.shape(), &[0, inputs, 0]));
    }
    let (batch, len) = (x.dim(0), x.dim(2));
    let directions = if bidirectional { 2 } else { 1 };
    let mut traces = Vec::with_capacity(directions);
    let mut finals = Vec::with_capacity(directions);
    for d in 0..directions {
        let (w, b) = (params.tensor(2 * d), params.tensor(2 * d + 1));
        let reversed = d == 1;
        let mut h = vec![0.0; batch * hidden];
        let mut c = vec![0.0; batch * hidden];
        let mut steps = Vec::with_capacity(len);
        for s in 0..len {
            let t = if reversed { len - 1 - s } else { s };
            let xt = time_slice(x, t);
            let step = ops::lstm_step(&xt, &h, &c, batch, inputs, hidden, w.data(), b.data());
            for n in 0..batch {
                for j in 0..hidden {
                    let idx = n * hidden + j;
                    h[idx] = step.gates[n * 4 * hidden + 3 * hidden + j] * step.tanh_c[idx];
                }
            }
            c.copy_from_slice(&step.c);
            steps.push(step);
        }
        finals.push(h);
        traces.push(LstmTrace { steps, reversed });
    }
    let width = directions * hidden;
    let mut out = vec![0.0; batch * width];
    for n in 0..batch {
        for (d, h) in finals.iter().enumerate() {
            out[n * width + d * hidden..n * width + (d + 1) * hidden]
                .copy_from_slice(&h[n * hidden..(n + 1) * hidden]);
        }
    }
    Ok((Tensor::new(vec![batch, width], out)?, Cache::Lstm(traces)))
}

fn lstm_sequence_backward(
    traces: &[LstmTrace],
    params: &LayerParams,
    inputs: usize,
    hidden: usize,
    grad: &Tensor,
) -> Result<LayerGrad> {
    let batch = grad.dim(0);
    let width = traces.len() * hidden;
    if grad.shape() != [batch, width] {
        return Err(Error::shape("lstm backward", grad.shape(), &[batch, width]));
    }
    let len = traces.first().map_or(0, |t| t.steps.len());
    let mut dx = Tensor::zeros(&[batch, inputs, len]);
    let mut wrt_params = Vec::new();
    for (d, trace) in traces.iter().enumerate() {
        let w = params.tensor(2 * d);
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; 4 * hidden];
        let mut dh = vec![0.0; batch * hidden];
        for n in 0..batch {
            dh[n * hidden..(n + 1) * hidden]
                .copy_from_slice(&grad.data()[n * width + d * hidden..n * width + (d + 1) * hidden]);
        }
        let mut dc = vec![0.0; batch * hidden];
        for s in (0..trace.steps.len()).rev() {
            let t = if trace.reversed { len - 1 - s } else { s };
            let (dxt, dh_prev, dc_prev) = ops::lstm_step_backward(
                &trace.steps[s],
                &dh,
                &dc,
                batch,
                inputs,
                hidden,
                w.data(),
                &mut dw,
                &mut db,
            );
            for n in 0..batch {
                for i in 0..inputs {
                    dx.data_mut()[(n * inputs + i) * len + t] += dxt[n * inputs + i];
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        wrt_params.push(Tensor::new(w.shape().to_vec(), dw)?);
        wrt_params.push(Tensor::new(vec![4 * hidden], db)?);
    }
    Ok(LayerGrad {
        wrt_input: dx,
        wrt_params,
    })
}

fn backward(kind: &LayerKind, params: &LayerParams, cache: &Cache, grad: &Tensor) -> Result<LayerGrad> {
    let no_params = |wrt_input| LayerGrad {
        wrt_input,
        wrt_params: Vec::new(),
    };
    let mismatch = || Error::invalid(format!("cache does not match layer {kind:?}"));
    Ok(match (kind, cache) {
        (LayerKind::Scale { factor }, Cache::Shape(_)) => no_params(grad.map(|g| g * factor)),
        (LayerKind::Embedding { dim, .. }, Cache::Input(x)) => {
            let table = params.tensor(0);
            let (batch, len) = (x.dim(0), x.dim(1));
            let mut dt = Tensor::zeros(table.shape());
            for n in 0..batch {
                for t in 0..len {
                    let idx = x.data()[n * len + t] as usize;
                    for d in 0..*dim {
                        dt.data_mut()[idx * dim + d] += grad.data()[(n * dim + d) * len + t];
                    }
                }
            }
            LayerGrad {
                wrt_input: Tensor::zeros(x.shape()),
                wrt_params: vec![dt],
            }
        }
        (LayerKind::Dense { .. }, Cache::Input(x)) => {
            let (dx, dw, db) = ops::dense_backward(x, params.tensor(0), grad)?;
            LayerGrad {
                wrt_input: dx,
                wrt_params: vec![dw, db],
            }
        }
        (LayerKind::Conv1d { .. }, Cache::Input(x)) => {
            let (dx, dw, db) = ops::conv1d_same_backward(x, params.tensor(0), grad)?;
            LayerGrad {
                wrt_input: dx,
                wrt_params: vec![dw, db],
            }
        }
        (LayerKind::BatchNorm { eps, .. }, Cache::BatchNorm { stats, mode }) => {
            let (dx, dg, db) = ops::batchnorm1d_backward(stats, params.tensor(0), grad, *mode, *eps)?;
            let zeros = Tensor::zeros(dg.shape());
            LayerGrad {
                wrt_input: dx,
                wrt_params: vec![dg, db, zeros.clone(), zeros],
            }
        }
        (LayerKind::Dropout { .. }, Cache::Dropout(mask)) => no_params(grad.zip_map(mask, |g, m| g * m)?),
        (LayerKind::MaxPool { .. }, Cache::MaxPool { input_shape, argmax }) => {
            no_params(ops::maxpool1d_backward(input_shape, argmax, grad)?)
        }
        (LayerKind::AdaptiveAvgPool { .. }, Cache::Shape(shape)) => {
            no_params(ops::adaptive_avg_pool1d_backward(shape, grad)?)
        }
        (LayerKind::Lstm { inputs, hidden, .. }, Cache::Lstm(traces)) => {
            lstm_sequence_backward(traces, params, *inputs, *hidden, grad)?
        }
        (LayerKind::Activation(Activation::Relu), Cache::Input(x)) => no_params(ops::relu_backward(x, grad)?),
        (LayerKind::Activation(Activation::Sigmoid), Cache::Output(y)) => {
            no_params(ops::sigmoid_backward(y, grad)?)
        }
        (LayerKind::Activation(Activation::Tanh), Cache::Output(y)) => no_params(ops::tanh_backward(y, grad)?),
        (LayerKind::Flatten, Cache::Shape(shape)) => no_params(grad.clone().reshape(shape)?),
        _ => return Err(mismatch()),
    })
}
