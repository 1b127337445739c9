//! Synthetic API-call sequences with a known class signal.
//!
//! Recipe, per record of 100 positions:
//!
//! - benign: each position is drawn from `[0, 160)` with probability 0.9 and
//!   from the full vocabulary otherwise.
//! - malware: each position is drawn from `[120, 307)` with probability 0.65
//!   and from `[0, 160)` otherwise; then three motifs from
//!   [`MALWARE_MOTIFS`] are written at random offsets.
//!
//! Records of both classes are interleaved by a seeded shuffle. Hashes are
//! 128 random bits rendered as lowercase hex.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Dataset, Label, SampleRecord, SEQ_LEN, VOCAB_SIZE};
use crate::rng::{seeded, Rng};

/// Call n-grams injected into synthetic malware.
pub const MALWARE_MOTIFS: [&[u16]; 4] = [
    &[286, 112, 297, 52],
    &[240, 241, 242],
    &[301, 171, 301, 171, 215],
    &[198, 77, 260],
];

fn benign_calls(rng: &mut Rng) -> Vec<u16> {
    (0..SEQ_LEN)
        .map(|_| {
            if rng.gen_bool(0.9) {
                rng.gen_range(0..160)
            } else {
                rng.gen_range(0..VOCAB_SIZE as u16)
            }
        })
        .collect()
}

fn malware_calls(rng: &mut Rng) -> Vec<u16> {
    let mut calls: Vec<u16> = (0..SEQ_LEN)
        .map(|_| {
            if rng.gen_bool(0.65) {
                rng.gen_range(120..VOCAB_SIZE as u16)
            } else {
                rng.gen_range(0..160)
            }
        })
        .collect();
    for _ in 0..3 {
        let motif = MALWARE_MOTIFS[rng.gen_range(0..MALWARE_MOTIFS.len())];
        let at = rng.gen_range(0..=SEQ_LEN - motif.len());
        calls[at..at + motif.len()].copy_from_slice(motif);
    }
    calls
}

fn random_hash(rng: &mut Rng) -> String {
    format!("{:016x}{:016x}", rng.gen::<u64>(), rng.gen::<u64>())
}

pub fn synth_generate(n_malware: usize, n_benign: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut labels: Vec<Label> = std::iter::repeat(Label::Malware)
        .take(n_malware)
        .chain(std::iter::repeat(Label::Benign).take(n_benign))
        .collect();
    labels.shuffle(&mut rng);
    let records = labels
        .into_iter()
        .map(|label| {
            let calls = match label {
                Label::Malware => malware_calls(&mut rng),
                Label::Benign => benign_calls(&mut rng),
            };
            SampleRecord::new(random_hash(&mut rng), calls, label).expect("generator stays in schema")
        })
        .collect();
    Dataset::new(records, format!("synthetic(malware={n_malware}, benign={n_benign}, seed={seed})"))
}
