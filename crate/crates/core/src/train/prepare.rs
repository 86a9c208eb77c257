use std::fs;
use std::path::Path;

use log::info;

use crate::data::{
    aggregate_median, file_digest, filter_records_with_stats, merge_plus, missingness_report, parse_table,
    select_subset, split_three_way, write_partition, DataError, DatasetSplit, FilterStats, Manifest, LABEL_TRANSFORM,
};
use crate::task::Task;

/// Records a split is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    All,
    Constant(Task),
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Constant(t) => t.name(),
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Subset::All);
        }
        match s.parse::<Task>() {
            Ok(t) if t.is_constant() => Ok(Subset::Constant(t)),
            _ => Err(format!("unknown subset {s:?}; expected all, kd, ki, ic50 or ec50")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareOptions {
    pub seed: u64,
    pub subsets: Vec<Subset>,
    /// Also write the merged Kd + EC50 set.
    pub plus: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            subsets: vec![Subset::All],
            plus: false,
        }
    }
}

fn build_split(records: &[crate::data::DtaRecord], subset: Subset, seed: u64, digest: &str) -> Result<DatasetSplit, DataError> {
    let chosen = match subset {
        Subset::All => records.to_vec(),
        Subset::Constant(t) => select_subset(records, t),
    };
    split_three_way(chosen, seed, subset.name(), digest)
}

/// Writes `train.tsv`, `validation.tsv`, the test partitions and
/// `manifest.json` into `dir`. A single test partition is `test.tsv`;
/// merged sets get `test_<source>.tsv` per source.
pub fn write_split(dir: &Path, split: &DatasetSplit, filter: Option<&FilterStats>) -> Result<Manifest, DataError> {
    fs::create_dir_all(dir)?;
    let mut parts: Vec<(String, &[crate::data::DtaRecord])> =
        vec![("train".into(), &split.train), ("validation".into(), &split.validation)];
    for (name, recs) in &split.tests {
        let file = if split.tests.len() == 1 { "test".to_string() } else { format!("test_{name}") };
        parts.push((file, recs));
    }
    let mut manifest = Manifest {
        name: split.name.clone(),
        seed: split.seed,
        source_digest: split.provenance.clone(),
        label_transform: LABEL_TRANSFORM.to_string(),
        counts: Default::default(),
        filter: filter.cloned(),
        missingness: Default::default(),
    };
    for (name, recs) in parts {
        let f = fs::File::create(dir.join(format!("{name}.tsv")))?;
        write_partition(std::io::BufWriter::new(f), recs)?;
        manifest.counts.insert(name.clone(), recs.len());
        manifest.missingness.insert(name, missingness_report(recs));
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Parses, filters, aggregates and splits `input`; writes one directory per
/// subset under `output` (`all`, `kd`, ... and `kd+ec50` for the merged set).
pub fn prepare_dataset(input: &Path, output: &Path, opts: &PrepareOptions) -> Result<Vec<Manifest>, DataError> {
    let raw = parse_table(input)?;
    let digest = file_digest(input)?;
    let (filtered, stats) = filter_records_with_stats(&raw);
    info!(
        "{} rows read, {} kept ({} range markers, {} without constants, {} bad SMILES, {} bad proteins)",
        stats.input, stats.kept, stats.range_marker, stats.no_constant, stats.invalid_smiles, stats.invalid_protein
    );
    let records = aggregate_median(&filtered);
    info!("{} unique pairs after aggregation", records.len());
    let mut manifests = Vec::new();
    for &subset in &opts.subsets {
        let split = build_split(&records, subset, opts.seed, &digest)?;
        manifests.push(write_split(&output.join(subset.name()), &split, Some(&stats))?);
    }
    if opts.plus {
        let kd = build_split(&records, Subset::Constant(Task::Kd), opts.seed, &digest)?;
        let ec50 = build_split(&records, Subset::Constant(Task::Ec50), opts.seed, &digest)?;
        let mut merged = merge_plus(&kd, &ec50);
        merged.provenance = digest.clone();
        manifests.push(write_split(&output.join(&merged.name), &merged, Some(&stats))?);
    }
    Ok(manifests)
}
