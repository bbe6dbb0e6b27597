//! Stratified train/validation/test splits and K-fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::generate::{LabeledCorpus, LabeledNote, Sex};
use crate::digest::rng_at;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: LabeledCorpus,
    pub validation: LabeledCorpus,
    pub test: LabeledCorpus,
}

/// Notes of one ICD class ordered so that sexes are interleaved in
/// proportion; any prefix then has a near-proportional sex mix.
fn interleaved_by_sex(notes: &[&LabeledNote], idx: Vec<usize>, seed: u64, class: &str) -> Vec<usize> {
    let mut by_sex: BTreeMap<Sex, Vec<usize>> = BTreeMap::new();
    for i in idx {
        by_sex.entry(notes[i].sex).or_default().push(i);
    }
    let mut keyed = Vec::new();
    for (sex, mut members) in by_sex {
        members.shuffle(&mut rng_at(seed, &["split", class, &format!("{sex:?}")]));
        let n = members.len() as f64;
        for (rank, i) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, sex, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

fn by_class(notes: &[&LabeledNote]) -> BTreeMap<String, Vec<usize>> {
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, n) in notes.iter().enumerate() {
        classes.entry(n.icd_code.clone()).or_default().push(i);
    }
    classes
}

/// Splits per ICD class: validation and test each take `ceil(n * ratio)`
/// notes of the class and training keeps the rest. Within a class the notes
/// are interleaved by sex before cutting, so every set sees both sexes in
/// proportion.
pub fn stratified_split(corpus: &LabeledCorpus, ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let r = [ratios.train, ratios.validation, ratios.test];
    if r.iter().any(|x| !(0.0..=1.0).contains(x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("split ratios must lie in [0, 1] and sum to 1, got {r:?}")));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let notes: Vec<&LabeledNote> = corpus.notes.iter().collect();
    let mut sets: [Vec<usize>; 3] = Default::default();
    for (class, idx) in by_class(&notes) {
        let n = idx.len();
        // Rounding up guards against float noise such as 10 * 0.1 = 1.0000000000000002.
        let take = |ratio: f64| ((n as f64 * ratio) - 1e-9).ceil().max(0.0) as usize;
        let (n_val, n_test) = (take(ratios.validation), take(ratios.test));
        let needed = n_val + n_test + usize::from(ratios.train > 0.0);
        if n < needed {
            return Err(Error::StratumTooSmall { stratum: class, size: n, needed });
        }
        let order = interleaved_by_sex(&notes, idx, seed, &class);
        sets[1].extend(&order[..n_val]);
        sets[2].extend(&order[n_val..n_val + n_test]);
        sets[0].extend(&order[n_val + n_test..]);
    }
    let take = |mut idx: Vec<usize>| {
        idx.sort_unstable();
        corpus.with_notes(idx.into_iter().map(|i| corpus.notes[i].clone()).collect())
    };
    let [train, validation, test] = sets;
    Ok(CorpusSplit { train: take(train), validation: take(validation), test: take(test) })
}

/// Assigns every note to one of `k` folds, stratified by ICD class (and sex
/// within class). Returns the test-fold index per note.
pub fn stratified_kfold(notes: &[LabeledNote], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k-fold needs k >= 2".into()));
    }
    let refs: Vec<&LabeledNote> = notes.iter().collect();
    let mut fold_of = vec![0; notes.len()];
    let mut offset = 0;
    for (class, idx) in by_class(&refs) {
        if idx.len() < k {
            return Err(Error::StratumTooSmall { stratum: class, size: idx.len(), needed: k });
        }
        let size = idx.len();
        for (pos, i) in interleaved_by_sex(&refs, idx, seed, &class).into_iter().enumerate() {
            fold_of[i] = (offset + pos) % k;
        }
        offset += size;
    }
    Ok(fold_of)
}
