//! The twelve endpoints, sparse label matrices and their CSV representation.
//!
//! File format: UTF-8 CSV with header `id,smiles,<12 endpoint names>` in the
//! fixed endpoint order. Label cells are `0`, `1`, or empty for an unmeasured
//! cell.

mod audit;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::parse_smiles;
use crate::hash::sha256_hex;

pub use audit::{audit, CellStats, EndpointStats, SplitAudit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    #[serde(rename = "NR-AR")]
    NrAr,
    #[serde(rename = "NR-AR-LBD")]
    NrArLbd,
    #[serde(rename = "NR-AhR")]
    NrAhr,
    #[serde(rename = "NR-Aromatase")]
    NrAromatase,
    #[serde(rename = "NR-ER")]
    NrEr,
    #[serde(rename = "NR-ER-LBD")]
    NrErLbd,
    #[serde(rename = "NR-PPAR-gamma")]
    NrPparGamma,
    #[serde(rename = "SR-ARE")]
    SrAre,
    #[serde(rename = "SR-ATAD5")]
    SrAtad5,
    #[serde(rename = "SR-HSE")]
    SrHse,
    #[serde(rename = "SR-MMP")]
    SrMmp,
    #[serde(rename = "SR-p53")]
    SrP53,
}

pub const ENDPOINT_COUNT: usize = 12;

impl Endpoint {
    pub const ALL: [Endpoint; ENDPOINT_COUNT] = [
        Endpoint::NrAr,
        Endpoint::NrArLbd,
        Endpoint::NrAhr,
        Endpoint::NrAromatase,
        Endpoint::NrEr,
        Endpoint::NrErLbd,
        Endpoint::NrPparGamma,
        Endpoint::SrAre,
        Endpoint::SrAtad5,
        Endpoint::SrHse,
        Endpoint::SrMmp,
        Endpoint::SrP53,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::NrAr => "NR-AR",
            Endpoint::NrArLbd => "NR-AR-LBD",
            Endpoint::NrAhr => "NR-AhR",
            Endpoint::NrAromatase => "NR-Aromatase",
            Endpoint::NrEr => "NR-ER",
            Endpoint::NrErLbd => "NR-ER-LBD",
            Endpoint::NrPparGamma => "NR-PPAR-gamma",
            Endpoint::SrAre => "SR-ARE",
            Endpoint::SrAtad5 => "SR-ATAD5",
            Endpoint::SrHse => "SR-HSE",
            Endpoint::SrMmp => "SR-MMP",
            Endpoint::SrP53 => "SR-p53",
        }
    }

    /// Assay description.
    pub fn description(self) -> &'static str {
        match self {
            Endpoint::NrAr => "Androgen Receptor - involved in male hormone signaling",
            Endpoint::NrArLbd => "Androgen Receptor Ligand Binding Domain - direct binding to androgen receptor",
            Endpoint::NrAhr => "Aryl Hydrocarbon Receptor - responds to environmental chemicals",
            Endpoint::NrAromatase => "Aromatase enzyme - converts androgens to estrogens",
            Endpoint::NrEr => "Estrogen Receptor - involved in female hormone signaling",
            Endpoint::NrErLbd => "Estrogen Receptor Ligand Binding Domain - direct binding to estrogen receptor",
            Endpoint::NrPparGamma => "Peroxisome Proliferator-Activated Receptor Gamma - regulates metabolism",
            Endpoint::SrAre => "Antioxidant Response Element - responds to oxidative stress",
            Endpoint::SrAtad5 => "ATAD5 - involved in DNA replication and genome stability",
            Endpoint::SrHse => "Heat Shock Response Element - responds to cellular stress",
            Endpoint::SrMmp => "Mitochondrial Membrane Potential - indicates mitochondrial function",
            Endpoint::SrP53 => "p53 tumor suppressor - activated by DNA damage and stress",
        }
    }

    /// Position in the fixed endpoint order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Endpoint> {
        Endpoint::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Endpoint::from_name(s).ok_or_else(|| format!("unknown endpoint {s:?}"))
    }
}

/// Labels of one molecule; `None` marks an unmeasured cell.
pub type LabelRow = [Option<bool>; ENDPOINT_COUNT];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("duplicate molecule id {0:?}")]
    DuplicateId(String),
    #[error("ids, smiles and label rows differ in length")]
    LengthMismatch,
}

/// Molecules x endpoints activity matrix with an explicit presence mask.
/// Values are only reachable together with their mask; nothing ever reads
/// an unmeasured cell as a number.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMatrix {
    ids: Vec<String>,
    smiles: Vec<String>,
    rows: Vec<LabelRow>,
}

impl LabelMatrix {
    pub fn new(ids: Vec<String>, smiles: Vec<String>, rows: Vec<LabelRow>) -> Result<Self, MatrixError> {
        if ids.len() != smiles.len() || ids.len() != rows.len() {
            return Err(MatrixError::LengthMismatch);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(MatrixError::DuplicateId(dup.clone()));
        }
        Ok(LabelMatrix { ids, smiles, rows })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn smiles(&self) -> &[String] {
        &self.smiles
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn smiles_of(&self, row: usize) -> &str {
        &self.smiles[row]
    }

    pub fn label(&self, row: usize, endpoint: Endpoint) -> Option<bool> {
        self.rows[row][endpoint.index()]
    }

    pub fn row(&self, row: usize) -> &LabelRow {
        &self.rows[row]
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    /// Column of one endpoint as optional labels.
    pub fn column(&self, endpoint: Endpoint) -> impl Iterator<Item = Option<bool>> + '_ {
        self.rows.iter().map(move |r| r[endpoint.index()])
    }

    pub fn present_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> LabelMatrix {
        LabelMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            smiles: rows.iter().map(|&i| self.smiles[i].clone()).collect(),
            rows: rows.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

/// (positives, negatives, missing) in one endpoint column.
pub fn endpoint_class_counts(matrix: &LabelMatrix, endpoint: Endpoint) -> (usize, usize, usize) {
    matrix.column(endpoint).fold((0, 0, 0), |(p, n, m), c| match c {
        Some(true) => (p + 1, n, m),
        Some(false) => (p, n + 1, m),
        None => (p, n, m + 1),
    })
}

/// A row dropped at load because its SMILES did not parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub line: u64,
    pub id: String,
    pub smiles: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub excluded: Vec<ExcludedRow>,
    /// SHA-256 of the file bytes.
    pub content_hash: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}, column {column}: label {value:?} is not 0, 1 or empty")]
    Label { line: u64, column: String, value: String },
    #[error("line {line}: empty {column}")]
    EmptyField { line: u64, column: &'static str },
    #[error("line {line}: duplicate molecule id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

pub fn header() -> Vec<&'static str> {
    let mut h = vec!["id", "smiles"];
    h.extend(Endpoint::ALL.iter().map(|e| e.name()));
    h
}

/// Loads a training file; unparseable SMILES rows are excluded and reported.
pub fn load_dataset(path: &Path) -> Result<(LabelMatrix, LoadReport), DatasetError> {
    read_dataset(read_file(path)?.as_slice())
}

/// Loads every row verbatim, whether or not its SMILES parses. Evaluation
/// and audits use this form so that no molecule silently disappears.
pub fn load_dataset_unfiltered(path: &Path) -> Result<(LabelMatrix, LoadReport), DatasetError> {
    read_dataset_with(read_file(path)?.as_slice(), false)
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

/// Parses the CSV format. Rows whose SMILES fail to parse are excluded and
/// listed in the report.
pub fn read_dataset<R: Read>(input: R) -> Result<(LabelMatrix, LoadReport), DatasetError> {
    read_dataset_with(input, true)
}

/// As [`read_dataset`]; with `exclude_unparseable` false every row is kept and
/// the report lists nothing.
pub fn read_dataset_with<R: Read>(mut input: R, exclude_unparseable: bool) -> Result<(LabelMatrix, LoadReport), DatasetError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|source| DatasetError::Io { path: "<input>".into(), source })?;
    let content_hash = sha256_hex(&bytes);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(&bytes[..]);
    let csv_err = |e: csv::Error| DatasetError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let expected = header();
    let found = reader.headers().map_err(csv_err)?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(DatasetError::Header { expected: expected.join(","), found: found.iter().collect::<Vec<_>>().join(",") });
    }
    let mut ids = Vec::new();
    let mut smiles = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    let mut report = LoadReport { content_hash, ..LoadReport::default() };
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let id = &record[0];
        let smi = &record[1];
        if id.is_empty() {
            return Err(DatasetError::EmptyField { line, column: "id" });
        }
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::DuplicateId { line, id: id.to_string() });
        }
        let mut labels: LabelRow = [None; ENDPOINT_COUNT];
        for (k, e) in Endpoint::ALL.iter().enumerate() {
            labels[k] = match &record[2 + k] {
                "" => None,
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(DatasetError::Label { line, column: e.name().to_string(), value: other.to_string() })
                }
            };
        }
        if exclude_unparseable {
            if let Err(e) = parse_smiles(smi) {
                let reason = e.to_string();
                report.excluded.push(ExcludedRow { line, id: id.to_string(), smiles: smi.to_string(), reason });
                continue;
            }
        } else if smi.is_empty() {
            return Err(DatasetError::EmptyField { line, column: "smiles" });
        }
        ids.push(id.to_string());
        smiles.push(smi.to_string());
        rows.push(labels);
    }
    let matrix = LabelMatrix::new(ids, smiles, rows).expect("ids checked while reading");
    Ok((matrix, report))
}

/// Writes the canonical CSV form (LF line endings, minimal quoting).
pub fn write_dataset<W: Write>(matrix: &LabelMatrix, output: W) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(output);
    let err = |e: csv::Error| DatasetError::Csv { line: 0, message: e.to_string() };
    w.write_record(header()).map_err(err)?;
    for i in 0..matrix.len() {
        let mut rec: Vec<&str> = vec![matrix.id(i), matrix.smiles_of(i)];
        rec.extend(matrix.row(i).iter().map(|c| match c {
            None => "",
            Some(false) => "0",
            Some(true) => "1",
        }));
        w.write_record(rec).map_err(err)?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: "<output>".into(), source })
}

pub fn save_dataset(matrix: &LabelMatrix, path: &Path) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    write_dataset(matrix, std::io::BufWriter::new(file))
}
