use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{feature_name, ClassProbs, Explanation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Waterfall,
    Summary,
    Bar,
    FeatureValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: usize,
    pub name: String,
    pub feature_value: u16,
    pub value: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarEntry {
    pub feature: usize,
    pub name: String,
    pub mean_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: usize,
    pub name: String,
    pub mean_abs: f64,
    /// `(attribution, raw feature value)` per explanation.
    pub points: Vec<(f64, u16)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureValueEntry {
    pub feature: usize,
    pub name: String,
    pub feature_value: u16,
    pub weight: f64,
    /// `"malware"` for positive weights, `"benign"` otherwise.
    pub toward: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotDoc {
    Waterfall {
        method: String,
        base_value: f64,
        prediction: f64,
        steps: Vec<WaterfallStep>,
    },
    Summary {
        rows: Vec<SummaryRow>,
    },
    Bar {
        bars: Vec<BarEntry>,
    },
    FeatureValue {
        method: String,
        class_probs: ClassProbs,
        entries: Vec<FeatureValueEntry>,
    },
}

fn single<'a>(es: &'a [Explanation], kind: &str) -> Result<&'a Explanation> {
    match es {
        [e] => Ok(e),
        _ => Err(Error::invalid(format!("{kind} plot needs exactly one explanation, got {}", es.len()))),
    }
}

fn by_magnitude<T>(items: &mut [T], key: impl Fn(&T) -> (f64, usize)) {
    items.sort_by(|a, b| {
        let (va, fa) = key(a);
        let (vb, fb) = key(b);
        vb.abs().total_cmp(&va.abs()).then(fa.cmp(&fb))
    });
}

pub fn plot_data(explanations: &[Explanation], kind: PlotKind) -> Result<PlotDoc> {
    match kind {
        PlotKind::Waterfall => {
            let e = single(explanations, "waterfall")?;
            let base = e
                .base_value
                .ok_or_else(|| Error::invalid("waterfall plot needs a SHAP explanation with a base value"))?;
            let mut attrs = e.attributions.clone();
            by_magnitude(&mut attrs, |a| (a.value, a.feature));
            let mut at = base;
            let steps = attrs
                .into_iter()
                .map(|a| {
                    let start = at;
                    at += a.value;
                    WaterfallStep {
                        feature: a.feature,
                        name: a.name,
                        feature_value: a.feature_value,
                        value: a.value,
                        start,
                        end: at,
                    }
                })
                .collect();
            Ok(PlotDoc::Waterfall {
                method: e.method.clone(),
                base_value: base,
                prediction: e.prediction(),
                steps,
            })
        }
        PlotKind::Bar | PlotKind::Summary => {
            if explanations.is_empty() {
                return Err(Error::invalid("summary and bar plots need at least one explanation"));
            }
            let mut acc: BTreeMap<usize, Vec<(f64, u16)>> = BTreeMap::new();
            for e in explanations {
                for a in &e.attributions {
                    acc.entry(a.feature).or_default().push((a.value, a.feature_value));
                }
            }
            let mut rows: Vec<SummaryRow> = acc
                .into_iter()
                .map(|(feature, points)| SummaryRow {
                    feature,
                    name: feature_name(feature),
                    mean_abs: points.iter().map(|p| p.0.abs()).sum::<f64>() / points.len() as f64,
                    points,
                })
                .collect();
            by_magnitude(&mut rows, |r| (r.mean_abs, r.feature));
            Ok(if kind == PlotKind::Bar {
                PlotDoc::Bar {
                    bars: rows
                        .into_iter()
                        .map(|r| BarEntry { feature: r.feature, name: r.name, mean_abs: r.mean_abs })
                        .collect(),
                }
            } else {
                PlotDoc::Summary { rows }
            })
        }
        PlotKind::FeatureValue => {
            let e = single(explanations, "feature_value")?;
            let mut entries: Vec<FeatureValueEntry> = e
                .attributions
                .iter()
                .map(|a| FeatureValueEntry {
                    feature: a.feature,
                    name: a.name.clone(),
                    feature_value: a.feature_value,
                    weight: a.value,
                    toward: if a.value > 0.0 { "malware" } else { "benign" }.into(),
                })
                .collect();
            by_magnitude(&mut entries, |x| (x.weight, x.feature));
            Ok(PlotDoc::FeatureValue {
                method: e.method.clone(),
                class_probs: e.class_probs,
                entries,
            })
        }
    }
}

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 150.0;
const ROW_H: f64 = 22.0;
const MAX_ROWS: usize = 20;

fn color(v: f64) -> &'static str {
    if v > 0.0 {
        "#d62728"
    } else {
        "#1f77b4"
    }
}

/// Horizontal-bar rendering of a plot document. Rows beyond the first 20
/// are omitted.
pub fn render_svg(doc: &PlotDoc) -> String {
    // (label, bar start, bar end, dots)
    let (title, rows): (String, Vec<(String, f64, f64, Vec<f64>)>) = match doc {
        PlotDoc::Waterfall { base_value, prediction, steps, .. } => (
            format!("waterfall: base {base_value:.4} to f(x) {prediction:.4}"),
            steps.iter().map(|s| (format!("{} = {}", s.name, s.feature_value), s.start, s.end, vec![])).collect(),
        ),
        PlotDoc::Bar { bars } => (
            "mean |attribution|".into(),
            bars.iter().map(|b| (b.name.clone(), 0.0, b.mean_abs, vec![])).collect(),
        ),
        PlotDoc::Summary { rows } => (
            "attribution per explanation".into(),
            rows.iter().map(|r| (r.name.clone(), 0.0, 0.0, r.points.iter().map(|p| p.0).collect())).collect(),
        ),
        PlotDoc::FeatureValue { class_probs, entries, .. } => (
            format!("malware {:.2} / benign {:.2}", class_probs.malware, class_probs.benign),
            entries.iter().map(|e| (format!("{} = {}", e.name, e.feature_value), 0.0, e.weight, vec![])).collect(),
        ),
    };
    let rows = &rows[..rows.len().min(MAX_ROWS)];
    let lo = rows.iter().flat_map(|r| [r.1, r.2].into_iter().chain(r.3.iter().copied())).fold(0.0f64, f64::min);
    let hi = rows.iter().flat_map(|r| [r.1, r.2].into_iter().chain(r.3.iter().copied())).fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |v: f64| LABEL_W + (v - lo) / span * (WIDTH - LABEL_W - 20.0);
    let height = 40.0 + ROW_H * rows.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="8" y="16">{title}</text>"#);
    for (i, (label, a, b, dots)) in rows.iter().enumerate() {
        let y = 28.0 + ROW_H * i as f64;
        let _ = writeln!(s, r#"<text x="8" y="{:.1}">{label}</text>"#, y + 13.0);
        if dots.is_empty() {
            let (x0, x1) = (x(a.min(*b)), x(a.max(*b)));
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                (x1 - x0).max(0.5),
                ROW_H - 6.0,
                color(b - a)
            );
        }
        for d in dots {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#, x(*d), y + 8.0, color(*d));
        }
    }
    let _ = writeln!(s, r##"<line x1="{0:.1}" y1="24" x2="{0:.1}" y2="{height}" stroke="#888"/>"##, x(0.0));
    s.push_str("</svg>\n");
    s
}
