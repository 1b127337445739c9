use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{attribution, predict_all, ClassProbs, Explanation, PredictFn};
use crate::dataio::{Dataset, Label};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Largest feature subset explained by full coalition enumeration.
pub const EXACT_FEATURE_LIMIT: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub mode: ShapMode,
    /// Positions to explain; all positions when absent. Positions outside
    /// the subset keep the explained input's value in every coalition.
    pub feature_subset: Option<Vec<usize>>,
    pub num_permutations: usize,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            mode: ShapMode::Permutation,
            feature_subset: None,
            num_permutations: 200,
            seed: 0,
        }
    }
}

/// Shapley values of an `n`-player game from its value function over
/// coalitions encoded as bit masks.
pub fn shapley_exact(n: usize, value: impl Fn(u32) -> f64) -> Result<Vec<f64>> {
    if n > 24 {
        return Err(Error::invalid(format!("{n} players is too many to enumerate")));
    }
    let table: Vec<f64> = (0..1u32 << n).map(value).collect();
    Ok(shapley_from_table(n, &table))
}

/// `weights[s] = s!(n-s-1)!/n! = 1 / (n · C(n-1, s))`.
fn coalition_weights(n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    let mut binom = 1.0;
    for s in 0..n {
        w.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    w
}

pub(crate) fn shapley_from_table(n: usize, table: &[f64]) -> Vec<f64> {
    let w = coalition_weights(n);
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|s| s & bit == 0)
                .map(|s| w[s.count_ones() as usize] * (table[(s | bit) as usize] - table[s as usize]))
                .sum()
        })
        .collect()
}

fn explained_features(x: &[u16], cfg: &ShapConfig) -> Result<Vec<usize>> {
    let features = match &cfg.feature_subset {
        Some(s) => s.clone(),
        None => (0..x.len()).collect(),
    };
    let mut seen = vec![false; x.len()];
    for &j in &features {
        if j >= x.len() {
            return Err(Error::invalid(format!("feature {j} outside 0..{}", x.len())));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid(format!("feature {j} listed twice")));
        }
    }
    if features.is_empty() {
        return Err(Error::invalid("no features to explain"));
    }
    Ok(features)
}

fn check_background(x: &[u16], background: &[Vec<u16>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::invalid("SHAP background is empty"));
    }
    if background.iter().any(|b| b.len() != x.len()) {
        return Err(Error::invalid("background rows must match the input length"));
    }
    Ok(())
}

/// Background rows with the coalition's features taken from `x`.
fn coalition_rows<'a>(
    x: &'a [u16],
    background: &'a [Vec<u16>],
    features: &'a [usize],
    present: impl Fn(usize) -> bool + 'a,
) -> impl Iterator<Item = Vec<u16>> + 'a {
    let absent: Vec<usize> = (0..features.len()).filter(|&k| !present(k)).map(|k| features[k]).collect();
    background.iter().map(move |b| {
        let mut z = x.to_vec();
        for &j in &absent {
            z[j] = b[j];
        }
        z
    })
}

/// `v(S)` for every coalition mask over `features`.
pub(crate) fn coalition_values(
    f: &dyn PredictFn,
    x: &[u16],
    background: &[Vec<u16>],
    features: &[usize],
) -> Result<Vec<f64>> {
    let n = features.len();
    let rows: Vec<Vec<u16>> = (0..1u32 << n)
        .flat_map(|mask| coalition_rows(x, background, features, move |k| mask >> k & 1 == 1))
        .collect();
    let preds = predict_all(f, &rows)?;
    Ok(preds.chunks(background.len()).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect())
}

pub fn shap_exact(f: &dyn PredictFn, x: &[u16], background: &[Vec<u16>], cfg: &ShapConfig) -> Result<Explanation> {
    check_background(x, background)?;
    let features = explained_features(x, cfg)?;
    if features.len() > EXACT_FEATURE_LIMIT {
        return Err(Error::invalid(format!(
            "exact SHAP is limited to {EXACT_FEATURE_LIMIT} features, got {}; use permutation mode",
            features.len()
        )));
    }
    let n = features.len();
    let table = coalition_values(f, x, background, &features)?;
    let phi = shapley_from_table(n, &table);
    let fx = predict_all(f, &[x.to_vec()])?[0];
    Ok(Explanation {
        method: "shap_exact".into(),
        class_probs: ClassProbs::from_malware(fx),
        base_value: Some(table[0]),
        attributions: features.iter().zip(&phi).map(|(&j, &v)| attribution(x, j, v)).collect(),
        standard_errors: None,
        metadata: serde_json::json!({
            "config": cfg,
            "background_size": background.len(),
            "coalitions": table.len(),
            "model_evaluations": table.len() * background.len() + 1,
        }),
    })
}

/// Monte Carlo Shapley values over seeded random orderings. The reported
/// values have the efficiency residual spread equally over the features;
/// the raw means are kept in the metadata.
pub fn shap_permutation(
    f: &dyn PredictFn,
    x: &[u16],
    background: &[Vec<u16>],
    cfg: &ShapConfig,
) -> Result<Explanation> {
    check_background(x, background)?;
    if cfg.num_permutations == 0 {
        return Err(Error::invalid("num_permutations must be >= 1"));
    }
    let features = explained_features(x, cfg)?;
    let n = features.len();
    let bg = background.len();
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;

    let empty = predict_all(f, &coalition_rows(x, background, &features, |_| false).collect::<Vec<_>>())?;
    let base = mean(&empty);
    let fx = predict_all(f, &[x.to_vec()])?[0];

    let mut rng = seeded(cfg.seed);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..cfg.num_permutations {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut rank = vec![0usize; n];
        for (r, &k) in order.iter().enumerate() {
            rank[k] = r;
        }
        let rows: Vec<Vec<u16>> = (1..=n)
            .flat_map(|len| {
                let rank = &rank;
                coalition_rows(x, background, &features, move |k| rank[k] < len)
            })
            .collect();
        let preds = predict_all(f, &rows)?;
        let mut prev = base;
        for (step, &k) in order.iter().enumerate() {
            let v = mean(&preds[step * bg..(step + 1) * bg]);
            let delta = v - prev;
            sum[k] += delta;
            sum_sq[k] += delta * delta;
            prev = v;
        }
    }
    let p = cfg.num_permutations as f64;
    let raw: Vec<f64> = sum.iter().map(|s| s / p).collect();
    let standard_errors = (cfg.num_permutations > 1).then(|| {
        raw.iter()
            .zip(&sum_sq)
            .map(|(m, sq)| ((sq - p * m * m).max(0.0) / (p - 1.0) / p).sqrt())
            .collect::<Vec<f64>>()
    });
    let residual = (fx - base) - raw.iter().sum::<f64>();
    let adjusted: Vec<f64> = raw.iter().map(|v| v + residual / n as f64).collect();
    Ok(Explanation {
        method: "shap_permutation".into(),
        class_probs: ClassProbs::from_malware(fx),
        base_value: Some(base),
        attributions: features.iter().zip(&adjusted).map(|(&j, &v)| attribution(x, j, v)).collect(),
        standard_errors,
        metadata: serde_json::json!({
            "config": cfg,
            "background_size": bg,
            "raw_estimates": raw,
            "efficiency_residual": residual,
            "model_evaluations": (cfg.num_permutations * n + 1) * bg + 1,
        }),
    })
}

pub fn shap_explain(f: &dyn PredictFn, x: &[u16], background: &[Vec<u16>], cfg: &ShapConfig) -> Result<Explanation> {
    match cfg.mode {
        ShapMode::Exact => shap_exact(f, x, background, cfg),
        ShapMode::Permutation => shap_permutation(f, x, background, cfg),
    }
}

/// Seeded sample of `size` benign rows (all rows when the dataset has no
/// benign class), in dataset order.
pub fn background_sample(d: &Dataset, size: usize, seed: u64) -> Result<Vec<Vec<u16>>> {
    let mut pool = d.class(Label::Benign);
    if pool.is_empty() {
        pool = d.records().iter().collect();
    }
    if pool.is_empty() || size == 0 {
        return Err(Error::invalid("cannot draw a background from an empty dataset"));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut seeded(seed));
    idx.truncate(size);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].calls().to_vec()).collect())
}
