use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded permutation, then the first rows train.
    Random { seed: u64 },
    /// Leading rows train, trailing rows test.
    TopDown,
    /// Trailing rows train, leading rows test.
    BottomUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    pub train_frac: f64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode, train_frac: f64) -> Self {
        Self { mode, train_frac }
    }

    /// Training rows: `⌊n·train_frac⌋`.
    pub fn train_len(&self, n: usize) -> Result<usize> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::invalid(format!("train_frac must be in (0, 1), got {}", self.train_frac)));
        }
        let k = (n as f64 * self.train_frac + 1e-9).floor() as usize;
        if k == 0 || k >= n {
            return Err(Error::invalid(format!(
                "train_frac {} on {n} rows leaves an empty side",
                self.train_frac
            )));
        }
        Ok(k)
    }

    /// 1-based row ranges of the train and test sides, as reported in
    /// experiment tables.
    pub fn ranges(&self, n: usize) -> Result<(RowRange, RowRange)> {
        let k = self.train_len(n)?;
        Ok(match self.mode {
            SplitMode::Random { .. } => (RowRange::Random, RowRange::Random),
            SplitMode::TopDown => (RowRange::Span(1, k), RowRange::Span(k + 1, n)),
            SplitMode::BottomUp => (RowRange::Span(n - k + 1, n), RowRange::Span(1, n - k)),
        })
    }
}

/// A contiguous 1-based, inclusive row span, or a random selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowRange {
    Random,
    Span(usize, usize),
}

fn grouped(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for RowRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowRange::Random => f.write_str("random"),
            RowRange::Span(a, b) => write!(f, "{}-{}", grouped(*a), grouped(*b)),
        }
    }
}

/// 0-based `(train, test)` row indices for `n` rows.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = spec.train_len(n)?;
    Ok(match spec.mode {
        SplitMode::Random { seed } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seeded(seed));
            let test = idx.split_off(k);
            (idx, test)
        }
        SplitMode::TopDown => ((0..k).collect(), (k..n).collect()),
        SplitMode::BottomUp => ((n - k..n).collect(), (0..n - k).collect()),
    })
}

pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(d.len(), spec)?;
    Ok((
        d.select(&train, format!("split(train, {spec:?})")),
        d.select(&test, format!("split(test, {spec:?})")),
    ))
}
