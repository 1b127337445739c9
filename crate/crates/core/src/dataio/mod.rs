//! API-call sequence datasets: schema, CSV I/O, balancing, SMOTE, split
//! protocols and a synthetic generator.

mod balance;
mod csvio;
mod smote;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use balance::{balance_undersample, mix_ratio, MixOutcome};
pub use csvio::{load_csv, read_csv, save_csv, write_csv, header};
pub use smote::{smote, smote_plan, SmoteConfig, SyntheticSample};
pub use split::{split, split_indices, RowRange, SplitMode, SplitSpec};
pub use synth::{synth_generate, MALWARE_MOTIFS};

/// Positions per sequence.
pub const SEQ_LEN: usize = 100;
/// Distinct API calls; indices run from 0 to `VOCAB_SIZE - 1`.
pub const VOCAB_SIZE: usize = 307;
/// Prefix of hashes assigned to SMOTE-generated records.
pub const SYNTHETIC_PREFIX: &str = "synthetic-";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malware,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malware => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malware),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Benign => Label::Malware,
            Label::Malware => Label::Benign,
        }
    }
}

/// True for a 32-character lowercase hex digest or a SMOTE-assigned id.
pub fn is_valid_hash(hash: &str) -> bool {
    let md5 = hash.len() == 32 && hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    let synthetic = hash
        .strip_prefix(SYNTHETIC_PREFIX)
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
    md5 || synthetic
}

/// One labeled API-call sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRecord {
    hash: String,
    calls: Vec<u16>,
    label: Label,
}

impl SampleRecord {
    pub fn new(hash: impl Into<String>, calls: Vec<u16>, label: Label) -> Result<Self> {
        let hash = hash.into();
        if !is_valid_hash(&hash) {
            return Err(Error::invalid(format!("hash {hash:?} is not 32 lowercase hex characters")));
        }
        if calls.len() != SEQ_LEN {
            return Err(Error::invalid(format!(
                "expected {SEQ_LEN} call indices, got {}",
                calls.len()
            )));
        }
        if let Some(pos) = calls.iter().position(|&c| c as usize >= VOCAB_SIZE) {
            return Err(Error::IndexOutOfRange {
                row: 0,
                column: pos,
                value: calls[pos] as usize,
                vocab: VOCAB_SIZE,
            });
        }
        Ok(Self { hash, calls, label })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn calls(&self) -> &[u16] {
        &self.calls
    }

    pub fn label(&self) -> Label {
        self.label
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub log: Vec<String>,
}

/// Ordered collection of records. Row order is significant for the ordered
/// split protocols.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<SampleRecord>,
    provenance: Provenance,
    counts: [usize; 2],
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>, source: impl Into<String>) -> Self {
        Self::with_provenance(
            records,
            Provenance {
                source: source.into(),
                log: Vec::new(),
            },
        )
    }

    fn with_provenance(records: Vec<SampleRecord>, provenance: Provenance) -> Self {
        let mut counts = [0; 2];
        for r in &records {
            counts[r.label.as_u8() as usize] += 1;
        }
        Self {
            records,
            provenance,
            counts,
        }
    }

    /// New dataset derived from this one, with `step` appended to the log.
    pub fn derive(&self, records: Vec<SampleRecord>, step: impl Into<String>) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.log.push(step.into());
        Self::with_provenance(records, provenance)
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.counts[label.as_u8() as usize]
    }

    pub fn rows(&self) -> Vec<&[u16]> {
        self.records.iter().map(|r| r.calls()).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label.as_u8()).collect()
    }

    pub fn find_hash(&self, hash: &str) -> Option<usize> {
        self.records.iter().position(|r| r.hash == hash)
    }

    /// Records with the given label, in dataset order.
    pub fn class(&self, label: Label) -> Vec<&SampleRecord> {
        self.records.iter().filter(|r| r.label == label).collect()
    }

    /// Stable reorder placing every record of `first` before the others.
    pub fn sorted_by_label(&self, first: Label) -> Self {
        let mut records = self.class(first).into_iter().cloned().collect::<Vec<_>>();
        records.extend(self.class(first.other()).into_iter().cloned());
        self.derive(records, format!("sort_by_label(first={first:?})"))
    }

    pub fn select(&self, indices: &[usize], step: impl Into<String>) -> Self {
        self.derive(indices.iter().map(|&i| self.records[i].clone()).collect(), step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_rules() {
        assert!(is_valid_hash("0123456789abcdef0123456789abcdef"));
        assert!(!is_valid_hash("0123456789ABCDEF0123456789abcdef"));
        assert!(!is_valid_hash("abc"));
        assert!(is_valid_hash("synthetic-12"));
        assert!(!is_valid_hash("synthetic-"));
    }

    #[test]
    fn record_validation() {
        let h = "0".repeat(32);
        assert!(SampleRecord::new(h.clone(), vec![306; SEQ_LEN], Label::Benign).is_ok());
        assert!(SampleRecord::new(h.clone(), vec![307; SEQ_LEN], Label::Benign).is_err());
        assert!(SampleRecord::new(h, vec![0; SEQ_LEN - 1], Label::Benign).is_err());
    }

    #[test]
    fn class_counts() {
        let h = "f".repeat(32);
        let recs = vec![
            SampleRecord::new(h.clone(), vec![1; SEQ_LEN], Label::Malware).unwrap(),
            SampleRecord::new(h.clone(), vec![2; SEQ_LEN], Label::Benign).unwrap(),
            SampleRecord::new(h, vec![3; SEQ_LEN], Label::Malware).unwrap(),
        ];
        let d = Dataset::new(recs, "mem");
        assert_eq!(d.count(Label::Malware), 2);
        assert_eq!(d.count(Label::Benign), 1);
        let s = d.sorted_by_label(Label::Benign);
        assert_eq!(s.labels(), vec![0, 1, 1]);
        assert_eq!(s.provenance().log.len(), 1);
    }
}
