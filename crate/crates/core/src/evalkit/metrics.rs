use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with malware (label 1) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total()).0
    }
}

pub(crate) fn check_binary(name: &str, v: &[u8]) -> Result<()> {
    match v.iter().position(|&x| x > 1) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] = {} is not a binary label", v[i]))),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "y_true has {} entries, y_pred {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    check_binary("y_true", y_true)?;
    check_binary("y_pred", y_pred)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// `num / den`, or `(0, true)` when the denominator is zero.
fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub benign: ClassMetrics,
    pub malware: ClassMetrics,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    /// Metrics that hit a zero denominator and were set to 0, e.g.
    /// `"malware.precision"`.
    pub degenerate: Vec<String>,
}

fn class_metrics(tp: usize, fp: usize, fn_: usize, name: &str, flags: &mut Vec<String>) -> ClassMetrics {
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (f1, df) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    for (flag, metric) in [(dp, "precision"), (dr, "recall"), (df, "f1")] {
        if flag {
            flags.push(format!("{name}.{metric}"));
        }
    }
    ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> MetricsReport {
    let mut degenerate = Vec::new();
    let benign = class_metrics(cm.tn, cm.fn_, cm.fp, "benign", &mut degenerate);
    let malware = class_metrics(cm.tp, cm.fp, cm.fn_, "malware", &mut degenerate);
    let (accuracy, empty) = ratio(cm.tp + cm.tn, cm.total());
    if empty {
        degenerate.push("accuracy".into());
    }
    let macro_avg = Averages {
        precision: (benign.precision + malware.precision) / 2.0,
        recall: (benign.recall + malware.recall) / 2.0,
        f1: (benign.f1 + malware.f1) / 2.0,
    };
    let n = cm.total();
    let weighted = |a: f64, b: f64| {
        if n == 0 {
            0.0
        } else {
            (a * benign.support as f64 + b * malware.support as f64) / n as f64
        }
    };
    let weighted_avg = Averages {
        precision: weighted(benign.precision, malware.precision),
        recall: weighted(benign.recall, malware.recall),
        f1: weighted(benign.f1, malware.f1),
    };
    MetricsReport {
        accuracy,
        confusion: *cm,
        benign,
        malware,
        macro_avg,
        weighted_avg,
        degenerate,
    }
}

pub fn metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricsReport> {
    Ok(metrics_from_confusion(&confusion(y_true, y_pred)?))
}

impl MetricsReport {
    /// Aligned plain-text table in the usual classification-report layout.
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score", "support");
        let n = self.confusion.total();
        for (name, c) in [("benign", &self.benign), ("malware", &self.malware)] {
            let _ = writeln!(s, "{name:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}", c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10.4} {:>10}", "accuracy", "", "", self.accuracy, n);
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(s, "{name:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}", a.precision, a.recall, a.f1, n);
        }
        let cm = &self.confusion;
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion: tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn_, cm.tn);
        if !self.degenerate.is_empty() {
            let _ = writeln!(s, "degenerate (0/0 set to 0): {}", self.degenerate.join(", "));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [1, 1, 1, 1, 1, 0, 0, 0];
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (5, 0, 0, 3));
        let r = metrics_from_confusion(&cm);
        for v in [r.accuracy, r.malware.f1, r.benign.f1, r.macro_avg.precision, r.weighted_avg.recall] {
            assert_eq!(v, 1.0);
        }
        assert!(r.degenerate.is_empty());
    }

    #[test]
    fn flipped_predictions_swap_cells() {
        let y = [1, 0, 1, 1, 0];
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let a = confusion(&y, &y).unwrap();
        let b = confusion(&y, &flipped).unwrap();
        assert_eq!((b.tp, b.fn_, b.tn, b.fp), (a.fn_, a.tp, a.fp, a.tn));
    }

    #[test]
    fn empty_and_invalid_inputs() {
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(confusion(&[1], &[]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn reference_counts() {
        let cm = ConfusionMatrix { tp: 140, fp: 111, fn_: 45, tn: 8480 };
        let r = metrics_from_confusion(&cm);
        // Independent arithmetic on the raw counts.
        let total = 140.0 + 111.0 + 45.0 + 8480.0;
        assert!((r.accuracy - (140.0 + 8480.0) / total).abs() < 1e-15);
        assert!((r.accuracy - 0.9822).abs() < 5e-5);
        assert!((r.malware.precision - 0.5578).abs() < 5e-5);
        assert!((r.malware.recall - 0.7568).abs() < 5e-5);
    }

    #[test]
    fn zero_support_class_is_flagged() {
        let r = metrics(&[1, 1, 1], &[1, 0, 1]).unwrap();
        assert_eq!(r.benign.support, 0);
        assert_eq!(r.benign.recall, 0.0);
        assert!(r.degenerate.contains(&"benign.recall".to_string()));
        assert!((r.macro_avg.f1 - r.malware.f1 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn text_table_mentions_classes() {
        let t = metrics(&[1, 0], &[1, 1]).unwrap().to_text_table();
        assert!(t.contains("malware") && t.contains("weighted avg"));
    }
}
