use rand::seq::SliceRandom;

use super::{Dataset, Label};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Seeded sample of `k` positions out of `0..n` without replacement,
/// returned in ascending order.
fn sample_sorted(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Undersamples the majority class to the minority count. The output is the
/// whole minority class followed by the sampled majority records, each in
/// dataset order.
pub fn balance_undersample(d: &Dataset, seed: u64) -> Result<Dataset> {
    let (benign, malware) = (d.count(Label::Benign), d.count(Label::Malware));
    if benign == 0 || malware == 0 {
        return Err(Error::invalid(format!(
            "undersampling needs both classes (benign {benign}, malware {malware})"
        )));
    }
    let minority = if malware < benign { Label::Malware } else { Label::Benign };
    let keep = benign.min(malware);
    let majority = d.class(minority.other());
    let mut records: Vec<_> = d.class(minority).into_iter().cloned().collect();
    records.extend(
        sample_sorted(majority.len(), keep, seed)
            .into_iter()
            .map(|i| majority[i].clone()),
    );
    Ok(d.derive(records, format!("balance_undersample(seed={seed}, per_class={keep})")))
}

/// Result of composing a dataset at a requested class proportion.
#[derive(Clone, Debug)]
pub struct MixOutcome {
    pub dataset: Dataset,
    pub malware: usize,
    pub benign: usize,
    /// Set when class supply capped the composition below the full file.
    pub warning: Option<String>,
}

/// Composes a dataset whose malware share is `legit_frac`, using as many
/// rows as class supply allows. `legit_frac == 1.0` keeps the file as is.
/// Selected rows keep their original relative order.
pub fn mix_ratio(d: &Dataset, legit_frac: f64, seed: u64) -> Result<MixOutcome> {
    if !(0.0..=1.0).contains(&legit_frac) {
        return Err(Error::invalid(format!("legit_frac must be in [0, 1], got {legit_frac}")));
    }
    let (mal_supply, ben_supply) = (d.count(Label::Malware), d.count(Label::Benign));
    if legit_frac == 1.0 {
        return Ok(MixOutcome {
            dataset: d.derive(d.records().to_vec(), "mix_ratio(1.0: unchanged)"),
            malware: mal_supply,
            benign: ben_supply,
            warning: None,
        });
    }
    let (n_mal, n_ben) = if legit_frac == 0.0 {
        (0, ben_supply)
    } else {
        let ratio = (1.0 - legit_frac) / legit_frac;
        let n_ben = ben_supply.min((mal_supply as f64 * ratio + 1e-9).floor() as usize);
        let n_mal = mal_supply.min((n_ben as f64 / ratio + 1e-9).round() as usize);
        (n_mal, n_ben)
    };
    if (legit_frac > 0.0 && n_mal == 0) || n_ben == 0 {
        return Err(Error::invalid(format!(
            "insufficient samples for malware share {legit_frac}: supply malware {mal_supply}, benign {ben_supply}"
        )));
    }
    let warning = (n_mal < mal_supply || n_ben < ben_supply).then(|| {
        format!(
            "malware share {legit_frac}: using {n_mal} of {mal_supply} malware and {n_ben} of {ben_supply} benign rows (capped by class supply)"
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }

    let mal_pos: Vec<usize> = (0..d.len()).filter(|&i| d.records()[i].label() == Label::Malware).collect();
    let ben_pos: Vec<usize> = (0..d.len()).filter(|&i| d.records()[i].label() == Label::Benign).collect();
    let mut chosen: Vec<usize> = sample_sorted(mal_pos.len(), n_mal, seed)
        .into_iter()
        .map(|i| mal_pos[i])
        .chain(
            sample_sorted(ben_pos.len(), n_ben, crate::rng::derive_seed(seed, 1))
                .into_iter()
                .map(|i| ben_pos[i]),
        )
        .collect();
    chosen.sort_unstable();
    let dataset = d.select(
        &chosen,
        format!("mix_ratio(malware_share={legit_frac}, seed={seed}, malware={n_mal}, benign={n_ben})"),
    );
    Ok(MixOutcome {
        dataset,
        malware: n_mal,
        benign: n_ben,
        warning,
    })
}
