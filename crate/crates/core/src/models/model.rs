use serde::{Deserialize, Serialize};

use super::spec::{Architecture, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Cache, Layer, LayerGrad, LayerKind, Mode, Tensor};
use crate::rng::{seeded, Rng};

/// Rows per chunk when predicting large batches.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// One row of a model summary. Sequence shapes are reported as
/// `(length, channels)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub layer_type: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// A layer stack ending in a sigmoid unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    mode: Mode,
}

struct Builder<'a> {
    rng: &'a mut Rng,
    layers: Vec<Layer>,
    counters: std::collections::HashMap<&'static str, usize>,
}

impl Builder<'_> {
    fn add(&mut self, base: &'static str, kind: LayerKind) -> Result<()> {
        let n = self.counters.entry(base).or_insert(0);
        let name = if *n == 0 { base.to_string() } else { format!("{base}_{n}") };
        *n += 1;
        self.layers.push(Layer::new(name, kind, self.rng)?);
        Ok(())
    }

    fn act(&mut self, a: Activation) -> Result<()> {
        let base = match a {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        };
        self.add(base, LayerKind::Activation(a))
    }
}

fn check_width(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(format!("{name} must be >= 1")));
    }
    Ok(())
}

/// Assembles the layer stack for `spec`, initializing weights from `seed`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    check_width("vocab_size", spec.vocab_size)?;
    check_width("seq_len", spec.seq_len)?;
    let mut rng = seeded(seed);
    let mut b = Builder {
        rng: &mut rng,
        layers: Vec::new(),
        counters: Default::default(),
    };
    let (eps, momentum) = (spec.batchnorm_eps, spec.batchnorm_momentum);
    match &spec.arch {
        Architecture::Mlp(cfg) => {
            let divisor = (spec.vocab_size.max(2) - 1) as f64;
            b.add("normalize", LayerKind::Scale { factor: 1.0 / divisor })?;
            let mut width = spec.seq_len;
            for &h in &cfg.hidden {
                check_width("mlp hidden width", h)?;
                b.add("dense", LayerKind::Dense { inputs: width, outputs: h })?;
                b.act(Activation::Relu)?;
                width = h;
            }
            b.add("dense", LayerKind::Dense { inputs: width, outputs: 1 })?;
        }
        Architecture::Cnn(cfg) => {
            check_width("embed_dim", cfg.embed_dim)?;
            if cfg.filters.is_empty() {
                return Err(Error::invalid("cnn needs at least one convolutional block"));
            }
            b.add("embedding", LayerKind::Embedding { vocab: spec.vocab_size, dim: cfg.embed_dim })?;
            let (mut channels, mut len) = (cfg.embed_dim, spec.seq_len);
            for &f in &cfg.filters {
                check_width("cnn filters", f)?;
                b.add("conv1d", LayerKind::Conv1d { channels, filters: f, kernel: cfg.kernel })?;
                b.act(Activation::Relu)?;
                b.add("batch_normalization", LayerKind::BatchNorm { features: f, eps, momentum })?;
                b.add("dropout", LayerKind::Dropout { rate: cfg.dropout })?;
                b.add("max_pooling1d", LayerKind::MaxPool { window: cfg.pool, stride: cfg.pool })?;
                len = crate::numerics::ops::pool_output_len(len, cfg.pool, cfg.pool)?;
                channels = f;
            }
            if cfg.adaptive_len == 0 || cfg.adaptive_len > len {
                return Err(Error::invalid(format!(
                    "adaptive_len {} inconsistent with pooled length {len}",
                    cfg.adaptive_len
                )));
            }
            b.add("adaptive_average_pooling1d", LayerKind::AdaptiveAvgPool { out_len: cfg.adaptive_len })?;
            b.add("flatten", LayerKind::Flatten)?;
            b.add("dense", LayerKind::Dense { inputs: channels * cfg.adaptive_len, outputs: cfg.dense })?;
            b.act(Activation::Relu)?;
            b.add("dense", LayerKind::Dense { inputs: cfg.dense, outputs: 1 })?;
        }
        Architecture::Rnn(cfg) => {
            check_width("embed_dim", cfg.embed_dim)?;
            check_width("rnn hidden", cfg.hidden)?;
            b.add("embedding", LayerKind::Embedding { vocab: spec.vocab_size, dim: cfg.embed_dim })?;
            b.add(
                "lstm",
                LayerKind::Lstm { inputs: cfg.embed_dim, hidden: cfg.hidden, bidirectional: cfg.bidirectional },
            )?;
            b.add("dropout", LayerKind::Dropout { rate: cfg.dropout })?;
            let width = if cfg.bidirectional { 2 * cfg.hidden } else { cfg.hidden };
            b.add("dense", LayerKind::Dense { inputs: width, outputs: cfg.dense })?;
            b.act(Activation::Relu)?;
            b.add("dense", LayerKind::Dense { inputs: cfg.dense, outputs: 1 })?;
        }
        Architecture::CnnLstm(cfg) => {
            check_width("embed_dim", cfg.embed_dim)?;
            b.add("layer_embedding", LayerKind::Embedding { vocab: spec.vocab_size, dim: cfg.embed_dim })?;
            b.add("batch_normalization", LayerKind::BatchNorm { features: cfg.embed_dim, eps, momentum })?;
            b.add("conv1d", LayerKind::Conv1d { channels: cfg.embed_dim, filters: cfg.filters, kernel: cfg.kernel })?;
            b.act(Activation::Relu)?;
            b.add("max_pooling1d", LayerKind::MaxPool { window: cfg.pool, stride: cfg.pool })?;
            b.add("lstm", LayerKind::Lstm { inputs: cfg.filters, hidden: cfg.hidden, bidirectional: false })?;
            b.add("dense", LayerKind::Dense { inputs: cfg.hidden, outputs: 1 })?;
        }
    }
    b.act(Activation::Sigmoid)?;
    let model = Model {
        spec: spec.clone(),
        layers: b.layers,
        mode: Mode::Infer,
    };
    model.summary()?;
    Ok(model)
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> ParamCount {
        let (trainable, non_trainable) = self.layers.iter().fold((0, 0), |(t, n), l| {
            let (a, b) = l.param_count();
            (t + a, n + b)
        });
        ParamCount {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }

    /// Per-layer output shapes and parameter counts. Activation layers are
    /// folded into the layer they follow.
    pub fn summary(&self) -> Result<Vec<LayerSummary>> {
        let mut shape = vec![self.spec.seq_len];
        let mut rows = Vec::new();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            let (t, n) = layer.param_count();
            match (&layer.kind, rows.last_mut()) {
                (LayerKind::Activation(_), Some(_)) => {}
                (LayerKind::Scale { .. }, _) => {}
                _ => {
                    let reported = if shape.len() == 2 { vec![shape[1], shape[0]] } else { shape.clone() };
                    rows.push(LayerSummary {
                        name: layer.name.clone(),
                        layer_type: layer_type_name(&layer.kind).into(),
                        output_shape: reported,
                        params: t + n,
                    });
                }
            }
        }
        if shape != [1] {
            return Err(Error::invalid(format!("model output shape {shape:?}, expected [1]")));
        }
        Ok(rows)
    }

    /// Converts rows of call indices into the `B×L` input tensor, checking
    /// length and vocabulary range.
    pub fn encode<R: AsRef<[u16]>>(&self, rows: &[R]) -> Result<Tensor> {
        let len = self.spec.seq_len;
        let mut data = Vec::with_capacity(rows.len() * len);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != len {
                return Err(Error::invalid(format!("row {r}: expected {len} indices, got {}", row.len())));
            }
            for (c, &v) in row.iter().enumerate() {
                if v as usize >= self.spec.vocab_size {
                    return Err(Error::IndexOutOfRange {
                        row: r,
                        column: c,
                        value: v as usize,
                        vocab: self.spec.vocab_size,
                    });
                }
                data.push(v as f64);
            }
        }
        Tensor::new(vec![rows.len(), len], data)
    }

    /// Inference-mode forward pass: `B×1` malware probabilities.
    pub fn forward<R: AsRef<[u16]>>(&self, rows: &[R]) -> Result<Tensor> {
        let mut x = self.encode(rows)?;
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Malware probability per row, evaluated in bounded chunks.
    pub fn predict_proba<R: AsRef<[u16]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(PREDICT_CHUNK) {
            out.extend_from_slice(self.forward(chunk)?.data());
        }
        Ok(out)
    }

    /// `1` iff the probability is at least `threshold`.
    pub fn predict_labels<R: AsRef<[u16]>>(&self, rows: &[R], threshold: f64) -> Result<Vec<u8>> {
        Ok(threshold_labels(&self.predict_proba(rows)?, threshold))
    }

    /// Train-mode forward pass over an encoded batch. Returns the
    /// probabilities and one cache per layer.
    pub(crate) fn forward_train(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (y, cache) = layer.forward(&h, Mode::Train, rng)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Backward pass from the gradient of the loss with respect to the
    /// final sigmoid's input. Returns gradients for every layer except the
    /// final sigmoid, in layer order.
    pub(crate) fn backward_from_logits(&self, caches: &[Cache], grad_logits: &Tensor) -> Result<Vec<LayerGrad>> {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(last);
        let mut g = grad_logits.clone();
        for i in (0..last).rev() {
            let lg = self.layers[i].backward(&caches[i], &g)?;
            g = lg.wrt_input.clone();
            grads.push(lg);
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l.kind, LayerKind::BatchNorm { .. }))
    }
}

pub fn threshold_labels(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

fn layer_type_name(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Scale { .. } => "Scale",
        LayerKind::Embedding { .. } => "Embedding",
        LayerKind::Dense { .. } => "Dense",
        LayerKind::Conv1d { .. } => "Conv1D",
        LayerKind::BatchNorm { .. } => "BatchNormalization",
        LayerKind::Dropout { .. } => "Dropout",
        LayerKind::MaxPool { .. } => "MaxPooling1D",
        LayerKind::AdaptiveAvgPool { .. } => "AdaptiveAvgPool1D",
        LayerKind::Lstm { bidirectional: true, .. } => "Bidirectional(LSTM)",
        LayerKind::Lstm { .. } => "LSTM",
        LayerKind::Activation(_) => "Activation",
        LayerKind::Flatten => "Flatten",
    }
}
