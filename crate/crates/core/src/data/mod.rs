//! BindingDB-style table ingestion: filtering, median aggregation,
//! activity labels, three-way splits and the merged "+" set.

mod io;
mod report;
mod split;

pub use io::{
    file_digest, parse_table, parse_table_reader, read_partition, write_partition, Manifest, RawRecord, LABEL_TRANSFORM,
    PARTITION_COLUMNS,
};
pub use report::{missingness_report, MissingnessReport, OverlapCount};
pub use split::{merge_plus, split_three_way, split_sizes, DatasetSplit};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mol::{is_valid_protein, parse_smiles};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: String, source: std::io::Error },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("value must be positive, got {0}")]
    NonPositive(f64),
    #[error("need at least 3 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("pair ({smiles}, {protein}) appears more than once; aggregate first")]
    DuplicatePair { smiles: String, protein: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One drug-target pair after filtering. Binding constants are in nanomolar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtaRecord {
    pub smiles: String,
    pub protein: String,
    pub kd_nm: Option<f64>,
    pub ki_nm: Option<f64>,
    pub ic50_nm: Option<f64>,
    pub ec50_nm: Option<f64>,
    pub ph: Option<f64>,
    pub qed: Option<f64>,
    pub active: Option<bool>,
}

impl DtaRecord {
    pub fn new(smiles: &str, protein: &str) -> Self {
        Self {
            smiles: smiles.to_string(),
            protein: protein.to_string(),
            kd_nm: None,
            ki_nm: None,
            ic50_nm: None,
            ec50_nm: None,
            ph: None,
            qed: None,
            active: None,
        }
    }

    pub fn pair(&self) -> (&str, &str) {
        (&self.smiles, &self.protein)
    }

    pub fn constants(&self) -> [Option<f64>; 4] {
        [self.kd_nm, self.ki_nm, self.ic50_nm, self.ec50_nm]
    }

    pub fn constant(&self, task: Task) -> Option<f64> {
        match task {
            Task::Kd => self.kd_nm,
            Task::Ki => self.ki_nm,
            Task::Ic50 => self.ic50_nm,
            Task::Ec50 => self.ec50_nm,
            _ => None,
        }
    }

    fn constant_mut(&mut self, task: Task) -> &mut Option<f64> {
        match task {
            Task::Kd => &mut self.kd_nm,
            Task::Ki => &mut self.ki_nm,
            Task::Ic50 => &mut self.ic50_nm,
            Task::Ec50 => &mut self.ec50_nm,
            _ => panic!("{task} is not a binding constant"),
        }
    }

    /// Training label for `task`: p-scale for constants, 0/1 for activity,
    /// raw values for pH and QED.
    pub fn label(&self, task: Task) -> Option<f64> {
        match task {
            Task::Kd | Task::Ki | Task::Ic50 | Task::Ec50 => {
                self.constant(task).and_then(|v| to_pscale(v).ok())
            }
            Task::Active => self.active.map(|a| if a { 1.0 } else { 0.0 }),
            Task::Ph => self.ph,
            Task::Qed => self.qed,
        }
    }

    pub fn labels(&self) -> [Option<f64>; 7] {
        Task::ALL.map(|t| self.label(t))
    }

    /// Whether the record satisfies every record-level invariant.
    pub fn is_valid(&self) -> bool {
        let constants = self.constants();
        constants.iter().any(Option::is_some)
            && constants.iter().flatten().all(|v| *v > 0.0 && v.is_finite())
            && self.protein.starts_with('M')
            && is_valid_protein(&self.protein)
            && self.qed.map_or(true, |q| (0.0..=1.0).contains(&q))
            && parse_smiles(&self.smiles).is_ok()
    }
}

/// `9 - log10(nM)`, the negative log of the molar concentration.
pub fn to_pscale(value_nm: f64) -> Result<f64, DataError> {
    if !(value_nm > 0.0) || !value_nm.is_finite() {
        return Err(DataError::NonPositive(value_nm));
    }
    Ok(9.0 - value_nm.log10())
}

/// Threshold below which a pair is labelled active, in nanomolar (1 µM).
pub const ACTIVE_THRESHOLD_NM: f64 = 1000.0;

/// Active iff the smallest present constant is strictly below 1 µM. `None`
/// when no constant is present.
pub fn binarize_active(record: &DtaRecord) -> Option<bool> {
    record
        .constants()
        .into_iter()
        .flatten()
        .reduce(f64::min)
        .map(|m| m < ACTIVE_THRESHOLD_NM)
}

/// Why [`filter_records`] dropped rows.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub no_constant: usize,
    pub range_marker: usize,
    pub unparsable_value: usize,
    pub non_positive: usize,
    pub invalid_smiles: usize,
    pub invalid_protein: usize,
}

/// True when a cell carries a censoring or range marker. Exponent signs such
/// as `1e-3` are not markers.
fn has_range_marker(cell: &str) -> bool {
    let chars: Vec<char> = cell.chars().collect();
    chars.iter().enumerate().any(|(i, &c)| match c {
        '<' | '>' | '±' | '−' | '≤' | '≥' | '~' => true,
        '+' | '-' => !(i > 0 && matches!(chars[i - 1], 'e' | 'E') && i + 1 < chars.len()),
        _ => false,
    })
}

enum CellOutcome {
    Missing,
    Value(f64),
    Marker,
    Unparsable,
    NonPositive,
}

fn constant_cell(cell: Option<&str>) -> CellOutcome {
    let Some(text) = cell.map(str::trim).filter(|t| !t.is_empty()) else {
        return CellOutcome::Missing;
    };
    if has_range_marker(text) {
        return CellOutcome::Marker;
    }
    match text.parse::<f64>() {
        Ok(v) if !v.is_finite() => CellOutcome::Unparsable,
        Ok(v) if v <= 0.0 => CellOutcome::NonPositive,
        Ok(v) => CellOutcome::Value(v),
        Err(_) => CellOutcome::Unparsable,
    }
}

fn optional_number(cell: Option<&str>) -> Option<f64> {
    cell.map(str::trim)
        .filter(|t| !t.is_empty())
        .and_then(|t| t.parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

pub fn filter_records(raw: &[RawRecord]) -> Vec<DtaRecord> {
    filter_records_with_stats(raw).0
}

/// Keeps rows whose binding constants are exact positive numbers, whose
/// SMILES parses and whose protein starts with methionine.
pub fn filter_records_with_stats(raw: &[RawRecord]) -> (Vec<DtaRecord>, FilterStats) {
    let mut stats = FilterStats {
        input: raw.len(),
        ..FilterStats::default()
    };
    let mut out = Vec::new();
    'rows: for row in raw {
        let mut record = DtaRecord::new(row.smiles.trim(), row.protein.trim());
        let mut any = false;
        for (task, cell) in Task::CONSTANTS.iter().zip(row.constants()) {
            match constant_cell(cell) {
                CellOutcome::Missing => {}
                CellOutcome::Value(v) => {
                    *record.constant_mut(*task) = Some(v);
                    any = true;
                }
                CellOutcome::Marker => {
                    stats.range_marker += 1;
                    continue 'rows;
                }
                CellOutcome::Unparsable => {
                    stats.unparsable_value += 1;
                    continue 'rows;
                }
                CellOutcome::NonPositive => {
                    stats.non_positive += 1;
                    continue 'rows;
                }
            }
        }
        if !any {
            stats.no_constant += 1;
            continue;
        }
        if !record.protein.starts_with('M') || !is_valid_protein(&record.protein) {
            stats.invalid_protein += 1;
            continue;
        }
        if parse_smiles(&record.smiles).is_err() {
            stats.invalid_smiles += 1;
            continue;
        }
        record.ph = optional_number(row.ph.as_deref());
        record.qed = optional_number(row.qed.as_deref()).filter(|q| (0.0..=1.0).contains(q));
        record.active = binarize_active(&record);
        out.push(record);
    }
    stats.kept = out.len();
    (out, stats)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Collapses duplicate (SMILES, protein) pairs. Each numeric field becomes
/// the median over the members where it is present; the activity label is
/// recomputed from the aggregated constants. Output is sorted by pair.
pub fn aggregate_median(records: &[DtaRecord]) -> Vec<DtaRecord> {
    let mut groups: BTreeMap<(&str, &str), Vec<&DtaRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.pair()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((smiles, protein), members)| {
            let field = |get: fn(&DtaRecord) -> Option<f64>| {
                let mut vals: Vec<f64> = members.iter().filter_map(|r| get(r)).collect();
                median(&mut vals)
            };
            let mut out = DtaRecord::new(smiles, protein);
            out.kd_nm = field(|r| r.kd_nm);
            out.ki_nm = field(|r| r.ki_nm);
            out.ic50_nm = field(|r| r.ic50_nm);
            out.ec50_nm = field(|r| r.ec50_nm);
            out.ph = field(|r| r.ph);
            out.qed = field(|r| r.qed);
            out.active = binarize_active(&out);
            out
        })
        .collect()
}

/// Records with `constant` present, the per-constant subsets the splits are
/// built from.
pub fn select_subset(records: &[DtaRecord], constant: Task) -> Vec<DtaRecord> {
    assert!(constant.is_constant(), "{constant} is not a binding constant");
    records.iter().filter(|r| r.constant(constant).is_some()).cloned().collect()
}
