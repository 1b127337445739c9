use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{bce_loss, Mode, Tensor};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 512,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::invalid("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
}

impl EpochHistory {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }
}

/// Mean BCE loss and 0.5-threshold accuracy of `model` in infer mode.
pub fn evaluate<R: AsRef<[u16]>>(model: &Model, rows: &[R], labels: &[u8]) -> Result<(f64, f64)> {
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    if rows.is_empty() {
        return Err(Error::invalid("cannot evaluate on zero rows"));
    }
    let p = model.predict_proba(rows)?;
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let loss = bce_loss(&Tensor::from_vec(p.clone()), &Tensor::from_vec(y))?;
    let correct = p
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| u8::from(p >= 0.5) == l)
        .count();
    Ok((loss, correct as f64 / rows.len() as f64))
}

/// Batches of row positions; a trailing batch of one row is folded into the
/// previous batch when `merge_singleton` is set.
fn batches(order: &[usize], size: usize, merge_singleton: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if merge_singleton && out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

struct OptState {
    step: u64,
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
}

impl OptState {
    fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<Vec<f64>>> = model
            .layers()
            .iter()
            .map(|l| l.params().entries().iter().map(|p| vec![0.0; p.value.len()]).collect())
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

fn apply_update(model: &mut Model, grads: &[crate::numerics::LayerGrad], cfg: &TrainConfig, st: &mut OptState) {
    st.step += 1;
    let lr = cfg.learning_rate;
    for (li, (layer, g)) in model.layers_mut().iter_mut().zip(grads).enumerate() {
        for (pi, (param, grad)) in layer.params_mut().values_mut().zip(&g.wrt_params).enumerate() {
            if !param.trainable {
                continue;
            }
            let w = param.value.data_mut();
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (w, &g) in w.iter_mut().zip(grad.data()) {
                        *w -= lr * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(st.step as i32);
                    let c2 = 1.0 - beta2.powi(st.step as i32);
                    let (m, v) = (&mut st.m[li][pi], &mut st.v[li][pi]);
                    for (j, (w, &g)) in w.iter_mut().zip(grad.data()).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Mini-batch training on BCE loss. Validation metrics are computed in
/// infer mode after each epoch; pass `None` to skip them (the validation
/// columns of the history are then empty).
pub fn fit_rows<R: AsRef<[u16]>>(
    model: &mut Model,
    rows: &[R],
    labels: &[u8],
    val: Option<(&[R], &[u8])>,
    cfg: &TrainConfig,
) -> Result<EpochHistory> {
    cfg.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::invalid(format!(
            "training needs matching non-empty rows and labels ({} vs {})",
            rows.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("labels must be 0 or 1, found {bad}")));
    }
    let x_all = model.encode(rows)?;
    let seq_len = model.spec().seq_len;
    let merge = model.has_batchnorm();
    let mut dropout_rng = seeded(derive_seed(cfg.seed, u64::MAX));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut state = OptState::new(model);
    let mut history = EpochHistory::default();
    model.set_mode(Mode::Train);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut seeded(derive_seed(cfg.seed, epoch as u64)));
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, batch) in batches(&order, cfg.batch_size, merge).into_iter().enumerate() {
            let b = batch.len();
            let mut xb = Vec::with_capacity(b * seq_len);
            for &i in batch {
                xb.extend_from_slice(&x_all.data()[i * seq_len..(i + 1) * seq_len]);
            }
            let xb = Tensor::new(vec![b, seq_len], xb)?;
            let (p, caches) = match model.forward_train(&xb, &mut dropout_rng) {
                Ok(v) => v,
                Err(e) => {
                    model.set_mode(Mode::Infer);
                    return Err(e);
                }
            };
            let yb: Vec<f64> = batch.iter().map(|&i| labels[i] as f64).collect();
            let loss = bce_loss(&p, &Tensor::from_vec(yb.clone()))?;
            if !loss.is_finite() || !p.is_finite() {
                model.set_mode(Mode::Infer);
                return Err(Error::Diverged { epoch, batch: bi, loss });
            }
            loss_sum += loss * b as f64;
            correct += p.data().iter().zip(&yb).filter(|(&p, &y)| (p >= 0.5) == (y == 1.0)).count();
            let grad = Tensor::new(
                vec![b, 1],
                p.data().iter().zip(&yb).map(|(p, y)| (p - y) / b as f64).collect(),
            )?;
            let grads = model.backward_from_logits(&caches, &grad)?;
            apply_update(model, &grads, cfg, &mut state);
        }
        history.train_loss.push(loss_sum / rows.len() as f64);
        history.train_accuracy.push(correct as f64 / rows.len() as f64);
        if let Some((vr, vl)) = val {
            let (l, a) = evaluate(model, vr, vl)?;
            history.val_loss.push(l);
            history.val_accuracy.push(a);
        }
        log::debug!(
            "epoch {}/{}: loss {:.5} acc {:.4}",
            epoch + 1,
            cfg.epochs,
            history.train_loss[epoch],
            history.train_accuracy[epoch]
        );
    }
    model.set_mode(Mode::Infer);
    Ok(history)
}

pub fn fit(model: &mut Model, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<EpochHistory> {
    if val.is_empty() {
        return Err(Error::invalid("validation dataset is empty"));
    }
    let (vr, vl) = (val.rows(), val.labels());
    fit_rows(model, &train.rows(), &train.labels(), Some((&vr, &vl)), cfg)
}
