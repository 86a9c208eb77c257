use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::MissingnessReport;
use super::{DataError, DtaRecord, FilterStats};

/// One input row with cells kept as text; empty cells are `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    /// 1-based line number in the source file (the header is line 1).
    pub row: usize,
    pub smiles: String,
    pub protein: String,
    pub kd: Option<String>,
    pub ki: Option<String>,
    pub ic50: Option<String>,
    pub ec50: Option<String>,
    pub ph: Option<String>,
    pub qed: Option<String>,
}

impl RawRecord {
    pub fn constants(&self) -> [Option<&str>; 4] {
        [&self.kd, &self.ki, &self.ic50, &self.ec50].map(|c| c.as_deref())
    }
}

const SMILES_COLUMN: &[&str] = &["ligand smiles"];
const PROTEIN_COLUMN: &[&str] = &[
    "bindingdb target chain sequence",
    "target sequence",
    "target chain sequence",
];

fn normalise_header(h: &str) -> String {
    h.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase()
}

pub fn parse_table(path: &Path) -> Result<Vec<RawRecord>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    parse_table_reader(file)
}

/// Reads a tab-separated table with a header row. Required columns:
/// `Ligand SMILES`, a target sequence column, `Kd (nM)`, `Ki (nM)`,
/// `IC50 (nM)`, `EC50 (nM)` and `pH`. A `QED` column is read when present.
pub fn parse_table_reader<R: Read>(reader: R) -> Result<Vec<RawRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Row {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(normalise_header)
        .collect();
    let find = |names: &[&str], label: &str| {
        headers
            .iter()
            .position(|h| names.contains(&h.as_str()))
            .ok_or_else(|| DataError::MissingColumn(label.to_string()))
    };
    let smiles = find(SMILES_COLUMN, "Ligand SMILES")?;
    let protein = find(PROTEIN_COLUMN, "BindingDB Target Chain Sequence")?;
    let kd = find(&["kd (nm)"], "Kd (nM)")?;
    let ki = find(&["ki (nm)"], "Ki (nM)")?;
    let ic50 = find(&["ic50 (nm)"], "IC50 (nM)")?;
    let ec50 = find(&["ec50 (nm)"], "EC50 (nM)")?;
    let ph = find(&["ph"], "pH")?;
    let qed = find(&["qed"], "QED").ok();

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DataError::Row {
            row,
            message: e.to_string(),
        })?;
        let cell = |idx: usize| rec.get(idx).map(str::trim).filter(|s| !s.is_empty()).map(String::from);
        out.push(RawRecord {
            row,
            smiles: cell(smiles).unwrap_or_default(),
            protein: cell(protein).unwrap_or_default(),
            kd: cell(kd),
            ki: cell(ki),
            ic50: cell(ic50),
            ec50: cell(ec50),
            ph: cell(ph),
            qed: qed.and_then(cell),
        });
    }
    Ok(out)
}

/// Column order of partition files.
pub const PARTITION_COLUMNS: [&str; 9] = [
    "smiles", "protein", "kd_nM", "ki_nM", "ic50_nM", "ec50_nM", "ph", "qed", "active",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_partition<W: Write>(writer: W, records: &[DtaRecord]) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer);
    let io = |e: csv::Error| DataError::Io(e.into());
    w.write_record(PARTITION_COLUMNS).map_err(io)?;
    for r in records {
        let active = r.active.map(|a| if a { "1" } else { "0" }).unwrap_or("");
        w.write_record([
            r.smiles.as_str(),
            r.protein.as_str(),
            &fmt_opt(r.kd_nm),
            &fmt_opt(r.ki_nm),
            &fmt_opt(r.ic50_nm),
            &fmt_opt(r.ec50_nm),
            &fmt_opt(r.ph),
            &fmt_opt(r.qed),
            active,
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partition(path: &Path) -> Result<Vec<DtaRecord>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Row {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    if header != PARTITION_COLUMNS {
        return Err(DataError::Row {
            row: 1,
            message: format!("expected columns {PARTITION_COLUMNS:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let bad = |message: String| DataError::Row { row, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |idx: usize| -> Result<Option<f64>, DataError> {
            match rec.get(idx).unwrap_or("") {
                "" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(format!("column {}: not a number: {s:?}", PARTITION_COLUMNS[idx]))),
            }
        };
        let active = match rec.get(8).unwrap_or("") {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            other => return Err(bad(format!("active must be 0 or 1, got {other:?}"))),
        };
        out.push(DtaRecord {
            smiles: rec.get(0).unwrap_or("").to_string(),
            protein: rec.get(1).unwrap_or("").to_string(),
            kd_nm: num(2)?,
            ki_nm: num(3)?,
            ic50_nm: num(4)?,
            ec50_nm: num(5)?,
            ph: num(6)?,
            qed: num(7)?,
            active,
        });
    }
    Ok(out)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Written next to the partition files by `prepare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub source_digest: String,
    pub label_transform: String,
    /// Partition name to record count; test partitions are `test` or
    /// `test_<subset>`.
    pub counts: BTreeMap<String, usize>,
    pub filter: Option<FilterStats>,
    pub missingness: BTreeMap<String, MissingnessReport>,
}

pub const LABEL_TRANSFORM: &str = "constants: p = 9 - log10(nM); active: 0/1; ph, qed: raw";
