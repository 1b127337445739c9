use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, SampleRecord, SYNTHETIC_PREFIX, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority/majority ratio after oversampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

/// One planned synthetic point before rounding.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    /// Position of the parent within the minority class (dataset order).
    pub parent: usize,
    /// Position of the chosen neighbor within the minority class.
    pub neighbor: usize,
    /// Interpolation factor in `[0, 1)`.
    pub gap: f64,
    pub point: Vec<f64>,
}

fn sq_dist(a: &[u16], b: &[u16]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// The `k` nearest minority neighbors of every minority record, by Euclidean
/// distance on the index vectors, ties broken by position.
fn neighbor_table(minority: &[&SampleRecord], k: usize) -> Vec<Vec<usize>> {
    minority
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut cand: Vec<(f64, usize)> = minority
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, b)| (sq_dist(a.calls(), b.calls()), j))
                .collect();
            cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

fn minority_label(d: &Dataset) -> Label {
    if d.count(Label::Malware) < d.count(Label::Benign) {
        Label::Malware
    } else {
        Label::Benign
    }
}

/// Plans the synthetic minority points SMOTE would add, without rounding.
pub fn smote_plan(d: &Dataset, cfg: &SmoteConfig) -> Result<(Label, Vec<SyntheticSample>)> {
    if !(cfg.target_ratio > 0.0 && cfg.target_ratio.is_finite()) {
        return Err(Error::invalid(format!("target_ratio must be positive, got {}", cfg.target_ratio)));
    }
    let label = minority_label(d);
    let minority = d.class(label);
    let majority = d.count(label.other());
    let wanted = (cfg.target_ratio * majority as f64).round() as usize;
    let count = wanted.saturating_sub(minority.len());
    if count == 0 {
        return Ok((label, Vec::new()));
    }
    if cfg.k_neighbors == 0 || cfg.k_neighbors >= minority.len() {
        return Err(Error::invalid(format!(
            "k_neighbors must be in [1, {}) for a minority class of {}",
            minority.len(),
            minority.len()
        )));
    }
    let table = neighbor_table(&minority, cfg.k_neighbors);
    let mut rng = seeded(cfg.seed);
    let plan = (0..count)
        .map(|_| {
            let parent = rng.gen_range(0..minority.len());
            let neighbor = table[parent][rng.gen_range(0..cfg.k_neighbors)];
            let gap: f64 = rng.gen();
            let (a, b) = (minority[parent].calls(), minority[neighbor].calls());
            let point = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| x as f64 + gap * (y as f64 - x as f64))
                .collect();
            SyntheticSample {
                parent,
                neighbor,
                gap,
                point,
            }
        })
        .collect();
    Ok((label, plan))
}

/// Appends synthetic minority records until the minority/majority ratio
/// reaches `target_ratio`. Coordinates are rounded to the nearest index and
/// clamped to the vocabulary. Original records are kept unchanged and first.
pub fn smote(d: &Dataset, cfg: &SmoteConfig) -> Result<Dataset> {
    let (label, plan) = smote_plan(d, cfg)?;
    let mut records = d.records().to_vec();
    let added = plan.len();
    for (i, s) in plan.into_iter().enumerate() {
        let calls = s
            .point
            .iter()
            .map(|v| v.round().clamp(0.0, (VOCAB_SIZE - 1) as f64) as u16)
            .collect();
        records.push(SampleRecord::new(format!("{SYNTHETIC_PREFIX}{i}"), calls, label)?);
    }
    Ok(d.derive(
        records,
        format!(
            "smote(k={}, target_ratio={}, seed={}, added={added})",
            cfg.k_neighbors, cfg.target_ratio, cfg.seed
        ),
    ))
}
