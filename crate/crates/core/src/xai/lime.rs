use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{attribution, predict_all, ClassProbs, Explanation, PredictFn};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_penalty: f64,
    /// Number of attributions reported, largest magnitude first.
    pub num_features: usize,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            kernel_width: 0.75 * 100f64.sqrt(),
            ridge_penalty: 1.0,
            num_features: 10,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < self.num_features + 1 {
            return Err(Error::invalid(format!(
                "num_samples {} must exceed num_features {}",
                self.num_samples, self.num_features
            )));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::invalid(format!("kernel_width must be > 0, got {}", self.kernel_width)));
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return Err(Error::invalid(format!("ridge_penalty must be >= 0, got {}", self.ridge_penalty)));
        }
        Ok(())
    }
}

/// Most frequent call index at each position (smallest index on ties).
pub fn most_frequent_vector<R: AsRef<[u16]>>(rows: &[R]) -> Result<Vec<u16>> {
    let first = rows.first().ok_or_else(|| Error::invalid("background is empty"))?.as_ref();
    let len = first.len();
    let vocab = rows.iter().flat_map(|r| r.as_ref().iter()).copied().max().unwrap_or(0) as usize + 1;
    let mut out = Vec::with_capacity(len);
    let mut counts = vec![0usize; vocab];
    for j in 0..len {
        counts.fill(0);
        for r in rows {
            let r = r.as_ref();
            if r.len() != len {
                return Err(Error::invalid("background rows differ in length"));
            }
            counts[r[j] as usize] += 1;
        }
        let best = (0..vocab).max_by_key(|&v| (counts[v], std::cmp::Reverse(v))).expect("vocab >= 1");
        out.push(best as u16);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimePerturbation {
    /// `1` keeps the original call, `0` replaces it.
    pub masks: Vec<Vec<u8>>,
    pub inputs: Vec<Vec<u16>>,
    pub weights: Vec<f64>,
}

/// Draws `num_samples` uniform binary masks, the first being all ones, and
/// builds the masked inputs and their proximity weights
/// `exp(-D²/kernel_width²)` with `D` the fraction of replaced positions.
pub fn lime_perturb(x: &[u16], replacement: &[u16], cfg: &LimeConfig, rng: &mut Rng) -> Result<LimePerturbation> {
    cfg.validate()?;
    if replacement.len() != x.len() || x.is_empty() {
        return Err(Error::invalid(format!(
            "replacement has {} positions, input {}",
            replacement.len(),
            x.len()
        )));
    }
    let n = x.len();
    let mut masks = Vec::with_capacity(cfg.num_samples);
    let mut inputs = Vec::with_capacity(cfg.num_samples);
    let mut weights = Vec::with_capacity(cfg.num_samples);
    for s in 0..cfg.num_samples {
        let mask: Vec<u8> = if s == 0 { vec![1; n] } else { (0..n).map(|_| rng.gen_range(0..2u8)).collect() };
        let input = mask.iter().zip(x.iter().zip(replacement)).map(|(&m, (&a, &b))| if m == 1 { a } else { b }).collect();
        let d = mask.iter().filter(|&&m| m == 0).count() as f64 / n as f64;
        weights.push((-(d * d) / (cfg.kernel_width * cfg.kernel_width)).exp());
        masks.push(mask);
        inputs.push(input);
    }
    Ok(LimePerturbation { masks, inputs, weights })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Weighted ridge regression of `predictions` on the mask matrix with an
/// unpenalized intercept.
pub fn lime_fit_surrogate(masks: &[Vec<u8>], predictions: &[f64], weights: &[f64], ridge_penalty: f64) -> Result<Surrogate> {
    let rows = masks.len();
    if rows == 0 || predictions.len() != rows || weights.len() != rows {
        return Err(Error::invalid(format!(
            "surrogate needs matching non-empty inputs ({rows} masks, {} predictions, {} weights)",
            predictions.len(),
            weights.len()
        )));
    }
    let p = masks[0].len();
    if masks.iter().any(|m| m.len() != p) {
        return Err(Error::invalid("mask rows differ in length"));
    }
    if ridge_penalty < 0.0 {
        return Err(Error::invalid("ridge_penalty must be >= 0"));
    }
    let dim = p + 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let mut row = vec![0.0; dim];
    for ((mask, &y), &w) in masks.iter().zip(predictions).zip(weights) {
        for (r, &m) in row.iter_mut().zip(mask) {
            *r = m as f64;
        }
        row[p] = 1.0;
        for i in 0..dim {
            if row[i] == 0.0 {
                continue;
            }
            let wi = w * row[i];
            b[i] += wi * y;
            for j in i..dim {
                a[(i, j)] += wi * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    for i in 0..p {
        a[(i, i)] += ridge_penalty;
    }
    let scale = (0..dim).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let singular = || {
        Error::Singular(format!(
            "surrogate normal equations are singular (ridge_penalty {ridge_penalty}); use ridge_penalty > 0 or more samples"
        ))
    };
    let chol = a.cholesky().ok_or_else(singular)?;
    let l = chol.l();
    let min_pivot = (0..dim).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > scale * 1e-12) {
        return Err(singular());
    }
    let beta = chol.solve(&b);
    Ok(Surrogate {
        coefficients: beta.iter().take(p).copied().collect(),
        intercept: beta[p],
    })
}

/// Perturb, predict and fit. Reports the `num_features` largest
/// coefficients by magnitude; the full coefficient vector is kept in the
/// metadata.
pub fn lime_explain(f: &dyn PredictFn, x: &[u16], replacement: &[u16], cfg: &LimeConfig) -> Result<Explanation> {
    let mut rng = seeded(cfg.seed);
    let pert = lime_perturb(x, replacement, cfg, &mut rng)?;
    let preds = predict_all(f, &pert.inputs)?;
    let surrogate = lime_fit_surrogate(&pert.masks, &preds, &pert.weights, cfg.ridge_penalty)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        surrogate.coefficients[b]
            .abs()
            .total_cmp(&surrogate.coefficients[a].abs())
            .then(a.cmp(&b))
    });
    let attributions = order
        .into_iter()
        .take(cfg.num_features)
        .map(|j| attribution(x, j, surrogate.coefficients[j]))
        .collect();
    Ok(Explanation {
        method: "lime".into(),
        class_probs: ClassProbs::from_malware(preds[0]),
        base_value: None,
        attributions,
        standard_errors: None,
        metadata: serde_json::json!({
            "config": cfg,
            "intercept": surrogate.intercept,
            "coefficients": surrogate.coefficients,
            "replacement": replacement,
            "model_evaluations": pert.inputs.len(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(num_samples: usize) -> LimeConfig {
        LimeConfig { num_samples, ..Default::default() }
    }

    #[test]
    fn first_mask_is_identity() {
        let x: Vec<u16> = (0..100).collect();
        let rep = vec![300u16; 100];
        let p = lime_perturb(&x, &rep, &cfg(20), &mut seeded(1)).unwrap();
        assert_eq!(p.inputs[0], x);
        assert_eq!(p.weights[0], 1.0);
        assert!(p.weights.iter().all(|&w| w <= 1.0 && w >= (-1.0 / 56.25f64).exp()));
    }

    #[test]
    fn all_zero_mask_replaces_everything() {
        let x = vec![5u16; 100];
        let rep = vec![7u16; 100];
        let p = lime_perturb(&x, &rep, &cfg(400), &mut seeded(2)).unwrap();
        for (m, (inp, w)) in p.masks.iter().zip(p.inputs.iter().zip(&p.weights)) {
            let zeros = m.iter().filter(|&&v| v == 0).count();
            assert_eq!(inp.iter().filter(|&&v| v == 7).count(), zeros);
            let d = zeros as f64 / 100.0;
            assert!((w - (-(d * d) / 56.25).exp()).abs() < 1e-15);
        }
        let minimal = (-1.0f64 / 56.25).exp();
        assert!(p.weights.iter().all(|&w| w >= minimal));
    }

    #[test]
    fn mask_density_is_one_half() {
        let x = vec![0u16; 100];
        let p = lime_perturb(&x, &x, &cfg(10_000), &mut seeded(3)).unwrap();
        let ones: usize = p.masks[1..].iter().map(|m| m.iter().filter(|&&v| v == 1).count()).sum();
        let density = ones as f64 / (9_999.0 * 100.0);
        assert!((density - 0.5).abs() < 0.01, "{density}");
    }

    #[test]
    fn exact_recovery_of_linear_target() {
        let mut rng = seeded(4);
        let p = 6;
        let coef = [0.5, -1.25, 0.0, 2.0, 0.3, -0.7];
        let masks: Vec<Vec<u8>> = (0..200).map(|_| (0..p).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let y: Vec<f64> = masks
            .iter()
            .map(|m| 0.1 + m.iter().zip(&coef).map(|(&a, c)| a as f64 * c).sum::<f64>())
            .collect();
        let w: Vec<f64> = (0..200).map(|i| 0.5 + (i % 7) as f64 / 10.0).collect();
        let s = lime_fit_surrogate(&masks, &y, &w, 0.0).unwrap();
        for (a, b) in s.coefficients.iter().zip(coef) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((s.intercept - 0.1).abs() < 1e-6);
    }

    #[test]
    fn constant_predictions() {
        let mut rng = seeded(5);
        let masks: Vec<Vec<u8>> = (0..50).map(|_| (0..4).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let s = lime_fit_surrogate(&masks, &[0.42; 50], &[1.0; 50], 1.0).unwrap();
        assert!(s.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((s.intercept - 0.42).abs() < 1e-12);
    }

    #[test]
    fn unvaried_feature_with_ridge_is_zero_and_singular_without() {
        let mut rng = seeded(6);
        let masks: Vec<Vec<u8>> = (0..80).map(|_| vec![rng.gen_range(0..2u8), 1, rng.gen_range(0..2u8)]).collect();
        let y: Vec<f64> = masks.iter().map(|m| m[0] as f64 * 0.3 + m[2] as f64).collect();
        let s = lime_fit_surrogate(&masks, &y, &[1.0; 80], 0.5).unwrap();
        assert!(s.coefficients[1].abs() < 1e-12);
        assert!(matches!(lime_fit_surrogate(&masks, &y, &[1.0; 80], 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn explain_is_deterministic_and_echoes_probability() {
        let f = |rows: &[Vec<u16>]| -> Vec<f64> {
            rows.iter().map(|r| if r[3] == 9 { 0.36 } else { 0.1 }).collect()
        };
        let mut x = vec![0u16; 100];
        x[3] = 9;
        let rep = vec![1u16; 100];
        let c = LimeConfig { num_samples: 300, num_features: 3, ..Default::default() };
        let a = lime_explain(&f, &x, &rep, &c).unwrap();
        assert_eq!(a, lime_explain(&f, &x, &rep, &c).unwrap());
        assert!((a.class_probs.malware - 0.36).abs() < 1e-15);
        assert!((a.class_probs.benign - 0.64).abs() < 1e-12);
        assert_eq!(a.attributions[0].name, "t_3");
        assert!(a.attributions[0].value > 0.0);
    }

    #[test]
    fn mode_vector() {
        let rows = vec![vec![1u16, 5], vec![2, 5], vec![2, 4]];
        assert_eq!(most_frequent_vector(&rows).unwrap(), vec![2, 5]);
        let tie = vec![vec![3u16], vec![1]];
        assert_eq!(most_frequent_vector(&tie).unwrap(), vec![1]);
    }
}
