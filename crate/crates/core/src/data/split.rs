use std::collections::HashSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, DtaRecord};

/// Train, validation and one or more test partitions. A plain split has a
/// single test partition named after the split; a merged split keeps each
/// source's test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub train: Vec<DtaRecord>,
    pub validation: Vec<DtaRecord>,
    pub tests: Vec<(String, Vec<DtaRecord>)>,
    pub seed: u64,
    pub provenance: String,
}

impl DatasetSplit {
    pub fn empty(name: &str) -> Self {
        Self {
            name: name.to_string(),
            train: Vec::new(),
            validation: Vec::new(),
            tests: Vec::new(),
            seed: 0,
            provenance: String::new(),
        }
    }

    pub fn test(&self, name: &str) -> Option<&[DtaRecord]> {
        self.tests.iter().find(|(n, _)| n == name).map(|(_, r)| r.as_slice())
    }
}

/// `(floor(n/3), floor(n/3), remainder)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let third = n / 3;
    (third, third, n - 2 * third)
}

/// Seeded shuffle followed by a floor-thirds cut; the remainder goes to test.
pub fn split_three_way(
    mut records: Vec<DtaRecord>,
    seed: u64,
    name: &str,
    provenance: &str,
) -> Result<DatasetSplit, DataError> {
    if records.len() < 3 {
        return Err(DataError::TooFewRecords(records.len()));
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.pair()) {
            return Err(DataError::DuplicatePair {
                smiles: r.smiles.clone(),
                protein: r.protein.clone(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let (n_train, n_val, _) = split_sizes(records.len());
    let test = records.split_off(n_train + n_val);
    let validation = records.split_off(n_train);
    Ok(DatasetSplit {
        name: name.to_string(),
        train: records,
        validation,
        tests: vec![(name.to_string(), test)],
        seed,
        provenance: provenance.to_string(),
    })
}

fn union_keep_first(
    first: &[DtaRecord],
    second: &[DtaRecord],
    partition: &str,
    exclude: &HashSet<(String, String)>,
) -> Vec<DtaRecord> {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::with_capacity(first.len() + second.len());
    for r in first.iter().chain(second) {
        let key = (r.smiles.clone(), r.protein.clone());
        if exclude.contains(&key) {
            warn!("{partition}: pair already in the merged training set, dropped: {}", r.smiles);
            continue;
        }
        if !seen.insert(key) {
            warn!("{partition}: pair present in both sources, keeping the first: {}", r.smiles);
            continue;
        }
        out.push(r.clone());
    }
    out
}

/// The combined "+" set: unions of the training and validation partitions,
/// with each source's test partition kept as is. Pair collisions keep the
/// record from `a`. Validation pairs already in the merged training set are
/// dropped so the merged train and validation stay disjoint.
pub fn merge_plus(a: &DatasetSplit, b: &DatasetSplit) -> DatasetSplit {
    let train = union_keep_first(&a.train, &b.train, "train", &HashSet::new());
    let train_pairs: HashSet<(String, String)> =
        train.iter().map(|r| (r.smiles.clone(), r.protein.clone())).collect();
    let validation = union_keep_first(&a.validation, &b.validation, "validation", &train_pairs);
    let name = match (a.name.is_empty(), b.name.is_empty()) {
        (false, false) => format!("{}+{}", a.name, b.name),
        (false, true) => a.name.clone(),
        _ => b.name.clone(),
    };
    let provenance = [a.provenance.as_str(), b.provenance.as_str()]
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("+");
    DatasetSplit {
        name,
        train,
        validation,
        tests: a.tests.iter().chain(&b.tests).cloned().collect(),
        seed: a.seed,
        provenance,
    }
}
