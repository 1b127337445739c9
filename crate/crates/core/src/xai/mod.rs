//! Model-agnostic explanations of the malware probability.
//!
//! Every explainer works against [`PredictFn`], so a trained [`Model`], a
//! closure or a planted test function can be explained the same way.
//! Attributions are signed toward malware: positive values push the
//! prediction toward the malware class.

mod axioms;
mod lime;
mod plot;
mod shap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

pub use axioms::{axiom_check, game_axioms, AxiomReport, GameAxiomReport};
pub use lime::{
    lime_explain, lime_fit_surrogate, lime_perturb, most_frequent_vector, LimeConfig, LimePerturbation, Surrogate,
};
pub use plot::{plot_data, render_svg, PlotDoc, PlotKind};
pub use shap::{
    background_sample, shap_exact, shap_explain, shap_permutation, shapley_exact, ShapConfig, ShapMode,
    EXACT_FEATURE_LIMIT,
};

/// Batch prediction of the malware probability. Implementations must be
/// deterministic and safe to call from several threads.
pub trait PredictFn: Sync {
    fn predict(&self, rows: &[Vec<u16>]) -> Result<Vec<f64>>;
}

impl PredictFn for Model {
    fn predict(&self, rows: &[Vec<u16>]) -> Result<Vec<f64>> {
        self.predict_proba(rows)
    }
}

impl<F> PredictFn for F
where
    F: Fn(&[Vec<u16>]) -> Vec<f64> + Sync,
{
    fn predict(&self, rows: &[Vec<u16>]) -> Result<Vec<f64>> {
        Ok(self(rows))
    }
}

const EVAL_CHUNK: usize = 512;

/// Evaluates `rows` in fixed chunks, in parallel on the current rayon pool.
/// Output order matches input order.
pub(crate) fn predict_all(f: &dyn PredictFn, rows: &[Vec<u16>]) -> Result<Vec<f64>> {
    let parts: Vec<Result<Vec<f64>>> = rows.par_chunks(EVAL_CHUNK).map(|c| f.predict(c)).collect();
    let mut out = Vec::with_capacity(rows.len());
    for (i, part) in parts.into_iter().enumerate() {
        let part = part?;
        let expected = rows[i * EVAL_CHUNK..].len().min(EVAL_CHUNK);
        if part.len() != expected {
            return Err(Error::invalid(format!(
                "predict function returned {} values for {expected} rows",
                part.len()
            )));
        }
        out.extend(part);
    }
    if let Some(p) = out.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("predict function returned {p}")));
    }
    Ok(out)
}

pub fn feature_name(position: usize) -> String {
    format!("t_{position}")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub benign: f64,
    pub malware: f64,
}

impl ClassProbs {
    pub fn from_malware(p: f64) -> Self {
        Self {
            benign: 1.0 - p,
            malware: p,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: usize,
    pub name: String,
    /// Raw call index at this position of the explained input.
    pub feature_value: u16,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: String,
    pub class_probs: ClassProbs,
    /// SHAP only: the expected prediction with every explained feature
    /// absent.
    pub base_value: Option<f64>,
    pub attributions: Vec<Attribution>,
    /// Permutation SHAP only, aligned with `attributions`.
    pub standard_errors: Option<Vec<f64>>,
    /// Method configuration, seed, sample counts and any raw estimates.
    pub metadata: serde_json::Value,
}

impl Explanation {
    pub fn prediction(&self) -> f64 {
        self.class_probs.malware
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanation serializes")
    }

    pub fn attribution_sum(&self) -> f64 {
        self.attributions.iter().map(|a| a.value).sum()
    }
}

pub(crate) fn attribution(x: &[u16], feature: usize, value: f64) -> Attribution {
    Attribution {
        feature,
        name: feature_name(feature),
        feature_value: x[feature],
        value,
    }
}
