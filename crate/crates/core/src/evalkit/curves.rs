use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::check_binary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// Points of a ROC curve `(fpr, tpr)` or PR curve `(recall, precision)`,
/// ordered by decreasing threshold. `thresholds[i]` is the score cut of
/// `points[i]`; the leading point uses `+inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    pub area: f64,
}

impl CurveData {
    /// `x,y` rows with a header naming the axes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(match self.kind {
            CurveKind::Roc => "fpr,tpr\n",
            CurveKind::Pr => "recall,precision\n",
        });
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }
}

/// Trapezoid area under points ordered by `x`.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Cumulative `(threshold, tp, fp)` after each group of tied scores, in
/// decreasing score order.
fn sweep(y_true: &[u8], scores: &[f64]) -> Result<Vec<(f64, usize, usize)>> {
    if y_true.len() != scores.len() {
        return Err(Error::invalid(format!(
            "y_true has {} entries, scores {}",
            y_true.len(),
            scores.len()
        )));
    }
    check_binary("y_true", y_true)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i} is {}", scores[i])));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if y_true[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).map_or(true, |&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    Ok(out)
}

pub fn roc(y_true: &[u8], scores: &[f64]) -> Result<CurveData> {
    let steps = sweep(y_true, scores)?;
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!(
            "ROC needs both classes (positives {pos}, negatives {neg})"
        )));
    }
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    for (t, tp, fp) in steps {
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(t);
    }
    let area = trapezoid(&points);
    Ok(CurveData {
        kind: CurveKind::Roc,
        points,
        thresholds,
        area,
    })
}

/// Precision-recall curve. The area is the trapezoid rule over recall, which
/// is not the same as step-wise average precision.
pub fn pr_curve(y_true: &[u8], scores: &[f64]) -> Result<CurveData> {
    let steps = sweep(y_true, scores)?;
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Err(Error::invalid("PR curve needs at least one positive"));
    }
    let mut points = vec![(0.0, 1.0)];
    let mut thresholds = vec![f64::INFINITY];
    for (t, tp, fp) in steps {
        points.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(t);
    }
    let area = trapezoid(&points);
    Ok(CurveData {
        kind: CurveKind::Pr,
        points,
        thresholds,
        area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mann_whitney(y: &[u8], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / pairs
    }

    #[test]
    fn roc_reference_cases() {
        assert_eq!(roc(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1]).unwrap().area, 1.0);
        assert_eq!(roc(&[1, 0, 1, 0], &[0.3; 4]).unwrap().area, 0.5);
        let c = roc(&[1, 1, 0, 0], &[0.9, 0.4, 0.6, 0.1]).unwrap();
        assert!((c.area - 0.75).abs() < 1e-15);
        assert!(roc(&[1, 1], &[0.1, 0.2]).is_err());
        assert!(roc(&[1, 0], &[f64::NAN, 0.2]).is_err());
    }

    /// Enumerates every threshold directly: predicted positive iff
    /// score >= t, for t in the distinct scores, plus the empty prediction.
    fn brute_pr(y: &[u8], s: &[f64]) -> f64 {
        let mut ts: Vec<f64> = s.to_vec();
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let mut pts = vec![(0.0, 1.0)];
        for t in ts {
            let tp = y.iter().zip(s).filter(|(&yy, &ss)| yy == 1 && ss >= t).count() as f64;
            let pp = s.iter().filter(|&&ss| ss >= t).count() as f64;
            pts.push((tp / pos, tp / pp));
        }
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }

    #[test]
    fn pr_reference_cases() {
        let perfect = pr_curve(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(perfect.area, 1.0);
        let y = [1, 1, 0, 0];
        let s = [0.9, 0.4, 0.6, 0.1];
        let c = pr_curve(&y, &s).unwrap();
        assert!((c.area - brute_pr(&y, &s)).abs() < 1e-15);
        assert_eq!(c.points.last().unwrap().0, 1.0);
        assert!(pr_curve(&[0, 0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = roc(&[1, 0], &[0.7, 0.2]).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("fpr,tpr\n"));
        assert_eq!(csv.lines().count(), 1 + c.points.len());
    }

    proptest! {
        #[test]
        fn auc_matches_mann_whitney(data in prop::collection::vec((0u8..2, 0u8..8), 2..60)) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            let s: Vec<f64> = data.iter().map(|d| d.1 as f64 / 7.0).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let c = roc(&y, &s).unwrap();
            prop_assert!((c.area - mann_whitney(&y, &s)).abs() < 1e-9);
            prop_assert!(c.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
            prop_assert!((0.0..=1.0).contains(&c.area));
        }

        #[test]
        fn pr_matches_brute_force(data in prop::collection::vec((0u8..2, 0u8..8), 1..40)) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            let s: Vec<f64> = data.iter().map(|d| d.1 as f64 / 7.0).collect();
            prop_assume!(y.contains(&1));
            let c = pr_curve(&y, &s).unwrap();
            prop_assert!((c.area - brute_pr(&y, &s)).abs() < 1e-12);
            prop_assert_eq!(c.points.last().unwrap().0, 1.0);
        }
    }
}
