//! Finite-difference verification of analytic layer gradients.

use rand::Rng as _;

use super::layer::{Layer, LayerKind};
use super::ops::Mode;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

/// Denominator floor of the relative error, so exactly-zero gradients are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `layer.backward` against central differences
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)` for every trainable parameter and every
/// input element, with `f = Σ forward(x) ⊙ R` for a fixed random projection
/// `R`. Integer-valued inputs (embedding indices) are not perturbed.
///
/// Every forward evaluation reuses `seed` for its RNG, so stochastic layers
/// see the same dropout mask each time.
pub fn grad_check(layer: &Layer, input: &Tensor, mode: Mode, eps: f64, seed: u64) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("grad_check eps must be in [1e-7, 1e-3], got {eps}")));
    }
    let eval = |layer: &Layer, x: &Tensor| -> Result<Tensor> {
        let mut l = layer.clone();
        let mut rng: Rng = seeded(seed);
        Ok(l.forward(x, mode, &mut rng)?.0)
    };
    let out = eval(layer, input)?;
    let mut proj_rng = seeded(seed ^ 0x5EED);
    let projection = out.map(|_| proj_rng.gen_range(-1.0..1.0));
    let objective = |layer: &Layer, x: &Tensor| -> Result<f64> {
        let y = eval(layer, x)?;
        Ok(y.data().iter().zip(projection.data()).map(|(a, b)| a * b).sum())
    };

    let mut work = layer.clone();
    let mut rng = seeded(seed);
    let (_, cache) = work.forward(input, mode, &mut rng)?;
    let grad = layer.backward(&cache, &projection)?;
    let finite = grad.wrt_input.is_finite() && grad.wrt_params.iter().all(Tensor::is_finite);
    if !finite {
        return Err(Error::NonFinite(format!("analytic gradient of layer {}", layer.name)));
    }

    let mut worst = 0.0f64;
    let mut checked = 0;
    if !matches!(layer.kind, LayerKind::Embedding { .. }) {
        let mut x = input.clone();
        for i in 0..x.len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + eps;
            let plus = objective(layer, &x)?;
            x.data_mut()[i] = orig - eps;
            let minus = objective(layer, &x)?;
            x.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(rel_error(grad.wrt_input.data()[i], numeric));
            checked += 1;
        }
    }
    for (p, entry) in layer.params().entries().iter().enumerate() {
        if !entry.trainable {
            continue;
        }
        for i in 0..entry.value.len() {
            let mut probe = layer.clone();
            let mut t = entry.value.clone();
            t.data_mut()[i] += eps;
            probe.params_mut().set(p, t.clone())?;
            let plus = objective(&probe, input)?;
            t.data_mut()[i] -= 2.0 * eps;
            probe.params_mut().set(p, t)?;
            let minus = objective(&probe, input)?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(rel_error(grad.wrt_params[p].data()[i], numeric));
            checked += 1;
        }
    }
    if !worst.is_finite() {
        return Err(Error::NonFinite(format!("finite-difference gradient of layer {}", layer.name)));
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        checked,
    })
}
