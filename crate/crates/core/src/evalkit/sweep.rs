use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MetricsReport};
use crate::dataio::{mix_ratio, split, Dataset, SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::models::{build_model, fit_rows, ModelSpec, TrainConfig};
use crate::rng::derive_seed;

/// How a cell orders its rows before splitting. Random cells draw their
/// permutation seed from the cell's own stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSplit {
    Random,
    TopDown,
    BottomUp,
}

impl CellSplit {
    pub fn name(self) -> &'static str {
        match self {
            CellSplit::Random => "random",
            CellSplit::TopDown => "top_down",
            CellSplit::BottomUp => "bottom_up",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Malware share of the composed dataset; 1.0 keeps the file unchanged.
    pub legit_frac: f64,
    pub split: CellSplit,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
}

fn default_train_frac() -> f64 {
    0.8
}

/// The sixteen cells of the reference experiment table, in table order.
/// The repeated 0.5 bottom-up cell is kept so row numbers line up.
pub fn default_table5_grid() -> Vec<SweepCell> {
    use CellSplit::*;
    let rows: [(f64, CellSplit); 16] = [
        (1.0, Random),
        (1.0, TopDown),
        (1.0, BottomUp),
        (0.8, Random),
        (0.8, TopDown),
        (0.8, BottomUp),
        (0.6, Random),
        (0.6, TopDown),
        (0.6, BottomUp),
        (0.5, Random),
        (0.5, TopDown),
        (0.5, BottomUp),
        (0.5, BottomUp),
        (0.4, Random),
        (0.4, TopDown),
        (0.4, BottomUp),
    ];
    rows.into_iter()
        .map(|(legit_frac, split)| SweepCell {
            legit_frac,
            split,
            train_frac: default_train_frac(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub legit_frac: f64,
    pub split: CellSplit,
    pub randomness: bool,
    pub train_frac: f64,
    pub seed: u64,
    pub malware: usize,
    pub benign: usize,
    pub train_rows: String,
    pub test_rows: String,
    pub accuracy: Option<f64>,
    pub metrics: Option<MetricsReport>,
    pub skipped: Option<String>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub master_seed: u64,
    pub rows: Vec<SweepRow>,
}

#[derive(Default)]
struct CellOutcome {
    malware: usize,
    benign: usize,
    train_rows: String,
    test_rows: String,
    warning: Option<String>,
    metrics: Option<MetricsReport>,
}

fn run_cell(d: &Dataset, cell: &SweepCell, spec: &ModelSpec, cfg: &TrainConfig, seed: u64, out: &mut CellOutcome) -> Result<()> {
    let mix = mix_ratio(d, cell.legit_frac, derive_seed(seed, 2))?;
    out.malware = mix.malware;
    out.benign = mix.benign;
    out.warning = mix.warning;
    let mode = match cell.split {
        CellSplit::Random => SplitMode::Random { seed: derive_seed(seed, 3) },
        CellSplit::TopDown => SplitMode::TopDown,
        CellSplit::BottomUp => SplitMode::BottomUp,
    };
    let spec_split = SplitSpec::new(mode, cell.train_frac);
    let (train_range, test_range) = spec_split.ranges(mix.dataset.len())?;
    out.train_rows = train_range.to_string();
    out.test_rows = test_range.to_string();
    let (train, test) = split(&mix.dataset, &spec_split)?;
    let mut model = build_model(spec, derive_seed(seed, 0))?;
    let cfg = TrainConfig { seed: derive_seed(seed, 1), ..cfg.clone() };
    fit_rows(&mut model, &train.rows(), &train.labels(), None, &cfg)?;
    let pred = model.predict_labels(&test.rows(), 0.5)?;
    out.metrics = Some(metrics(&test.labels(), &pred)?);
    Ok(())
}

/// Runs every grid cell: compose the class mix, split, train a fresh model
/// and evaluate on the held-out side. Cells that fail are recorded as
/// skipped with the reason. Rows follow grid order for any thread count.
pub fn sweep_table5(
    d: &Dataset,
    grid: &[SweepCell],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    master_seed: u64,
    threads: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let one = |(i, cell): (usize, &SweepCell)| {
        let seed = derive_seed(master_seed, i as u64);
        let mut out = CellOutcome::default();
        let skipped = run_cell(d, cell, spec, cfg, seed, &mut out).err().map(|e| {
            log::warn!("sweep cell {i} skipped: {e}");
            e.to_string()
        });
        SweepRow {
            cell: i,
            legit_frac: cell.legit_frac,
            split: cell.split,
            randomness: cell.split == CellSplit::Random,
            train_frac: cell.train_frac,
            seed,
            malware: out.malware,
            benign: out.benign,
            train_rows: out.train_rows,
            test_rows: out.test_rows,
            accuracy: out.metrics.as_ref().map(|m| m.accuracy),
            metrics: if skipped.is_some() { None } else { out.metrics },
            skipped,
            warning: out.warning,
        }
    };
    let rows = if threads <= 1 {
        grid.iter().enumerate().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| grid.par_iter().enumerate().map(one).collect())
    };
    Ok(SweepResult { master_seed, rows })
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serializes")
    }

    /// Aligned table with the reference table's columns.
    pub fn to_text_table(&self) -> String {
        let header = ["#", "Legitimate", "Forged", "Training", "Testing", "Randomness", "Accuracy"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let train = format!("{} ({})", pct(r.train_frac), r.train_rows);
                let test = format!("{} ({})", pct(1.0 - r.train_frac), r.test_rows);
                let acc = match (&r.accuracy, &r.skipped) {
                    (Some(a), _) => pct(*a),
                    (None, Some(_)) => "skipped".into(),
                    (None, None) => "-".into(),
                };
                [
                    (r.cell + 1).to_string(),
                    format!("{:.0}%", r.legit_frac * 100.0),
                    format!("{:.0}%", (1.0 - r.legit_frac) * 100.0),
                    train,
                    test,
                    if r.randomness { "Yes" } else { "No" }.to_string(),
                    acc,
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut s = String::new();
        let line = |cells: Vec<&str>, s: &mut String| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(header.to_vec(), &mut s);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut s);
        }
        for r in self.rows.iter().filter(|r| r.skipped.is_some()) {
            let _ = writeln!(s, "cell {}: skipped: {}", r.cell + 1, r.skipped.as_deref().unwrap_or_default());
        }
        s
    }

    /// One line per cell for accuracy-vs-cell plots.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,legit_frac,split,randomness,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.cell + 1, r.legit_frac, r.split.name(), r.randomness, acc);
        }
        s
    }
}
