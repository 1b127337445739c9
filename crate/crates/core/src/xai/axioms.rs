use serde::{Deserialize, Serialize};

use super::shap::{coalition_values, shapley_from_table};
use super::{predict_all, Explanation, PredictFn};
use crate::error::{Error, Result};

/// Two marginal contributions closer than this count as identical.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameAxiomReport {
    pub players: usize,
    /// `Σφ − (v(N) − v(∅))`.
    pub efficiency_residual: f64,
    /// Pairs whose marginal contributions agree on every coalition.
    pub symmetric_pairs: Vec<(usize, usize)>,
    pub max_symmetry_gap: f64,
    /// Players that never change the value.
    pub dummies: Vec<usize>,
    pub max_dummy_abs: f64,
}

fn game_report(n: usize, table: &[f64], phi: &[f64]) -> GameAxiomReport {
    let full = (1usize << n) - 1;
    let efficiency_residual = phi.iter().sum::<f64>() - (table[full] - table[0]);
    let dummies: Vec<usize> = (0..n)
        .filter(|&i| {
            let bit = 1usize << i;
            (0..=full).filter(|s| s & bit == 0).all(|s| (table[s | bit] - table[s]).abs() <= TIE_TOLERANCE)
        })
        .collect();
    let mut symmetric_pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (bi, bj) = (1usize << i, 1usize << j);
            let same = (0..=full)
                .filter(|s| s & (bi | bj) == 0)
                .all(|s| (table[s | bi] - table[s | bj]).abs() <= TIE_TOLERANCE);
            if same {
                symmetric_pairs.push((i, j));
            }
        }
    }
    GameAxiomReport {
        players: n,
        efficiency_residual,
        max_symmetry_gap: symmetric_pairs.iter().map(|&(i, j)| (phi[i] - phi[j]).abs()).fold(0.0, f64::max),
        max_dummy_abs: dummies.iter().map(|&i| phi[i].abs()).fold(0.0, f64::max),
        symmetric_pairs,
        dummies,
    }
}

/// Computes exact Shapley values of the game `v` and checks them against
/// the efficiency, symmetry and dummy axioms, detecting symmetric pairs and
/// dummy players from the value table itself.
pub fn game_axioms(n: usize, v: impl Fn(u32) -> f64) -> Result<GameAxiomReport> {
    if n == 0 || n > 20 {
        return Err(Error::invalid(format!("axiom check supports 1..=20 players, got {n}")));
    }
    let table: Vec<f64> = (0..1u32 << n).map(v).collect();
    let phi = shapley_from_table(n, &table);
    Ok(game_report(n, &table, &phi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// `base + Σφ − f(x)`.
    pub efficiency_residual: f64,
    /// Symmetry and dummy checks on the explanation's own coalition game
    /// (exact explanations only), compared against the reported values.
    pub game: Option<GameAxiomReport>,
}

pub fn axiom_check(e: &Explanation, f: &dyn PredictFn, x: &[u16], background: &[Vec<u16>]) -> Result<AxiomReport> {
    let base = e
        .base_value
        .ok_or_else(|| Error::invalid("axiom check needs a SHAP explanation with a base value"))?;
    let fx = predict_all(f, &[x.to_vec()])?[0];
    let efficiency_residual = base + e.attribution_sum() - fx;
    let game = if e.method == "shap_exact" {
        let features: Vec<usize> = e.attributions.iter().map(|a| a.feature).collect();
        let table = coalition_values(f, x, background, &features)?;
        let phi: Vec<f64> = e.attributions.iter().map(|a| a.value).collect();
        Some(game_report(features.len(), &table, &phi))
    } else {
        None
    };
    Ok(AxiomReport { efficiency_residual, game })
}
