use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Endpoint, LabelMatrix, ENDPOINT_COUNT};
use crate::chem::{parse_smiles, Molecule};
use crate::featurize::environments;

/// Labeled/missing/active statistics over a set of cells. Percentages are
/// rounded to one decimal; the raw counts are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cells: usize,
    pub present: usize,
    pub active: usize,
    pub labeled_pct: f64,
    pub missing_pct: f64,
    pub active_pct: f64,
}

impl CellStats {
    fn new(cells: usize, present: usize, active: usize) -> Self {
        let labeled = pct(present, cells);
        CellStats {
            cells,
            present,
            active,
            labeled_pct: round1(labeled),
            missing_pct: round1(if cells == 0 { 0.0 } else { 100.0 - labeled }),
            active_pct: round1(pct(active, present)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub endpoint: Endpoint,
    #[serde(flatten)]
    pub stats: CellStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub total_rows: usize,
    pub unique_molecules: usize,
    /// Rows dropped at load time; filled in by the caller that loaded the file.
    pub excluded_rows: usize,
    pub overall: CellStats,
    pub endpoints: Vec<EndpointStats>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn audit(matrix: &LabelMatrix) -> SplitAudit {
    let rows = matrix.len();
    let mut present = [0usize; ENDPOINT_COUNT];
    let mut active = [0usize; ENDPOINT_COUNT];
    for row in matrix.rows() {
        for (k, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                present[k] += 1;
                active[k] += usize::from(*v);
            }
        }
    }
    let endpoints = Endpoint::ALL
        .iter()
        .map(|&e| EndpointStats { endpoint: e, stats: CellStats::new(rows, present[e.index()], active[e.index()]) })
        .collect();
    SplitAudit {
        total_rows: rows,
        unique_molecules: count_unique(matrix.smiles()),
        excluded_rows: 0,
        overall: CellStats::new(rows * ENDPOINT_COUNT, present.iter().sum(), active.iter().sum()),
        endpoints,
    }
}

/// Distinct molecules by labelled-graph equality. Graphs are bucketed by an
/// isomorphism-invariant signature (sorted circular environment identifiers)
/// and compared exactly within a bucket. Unparseable entries count by text.
pub fn count_unique(smiles: &[String]) -> usize {
    let mut buckets: HashMap<Vec<u64>, Vec<Molecule>> = HashMap::new();
    let mut unparsed: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut unique = 0;
    for s in smiles {
        match parse_smiles(s) {
            Ok(mol) => {
                let mut sig: Vec<u64> = environments(&mol, 3).into_iter().map(|e| e.identifier).collect();
                sig.sort_unstable();
                let bucket = buckets.entry(sig).or_default();
                if !bucket.iter().any(|m| m.same_graph(&mol)) {
                    bucket.push(mol);
                    unique += 1;
                }
            }
            Err(_) => {
                if unparsed.insert(s.as_str()) {
                    unique += 1;
                }
            }
        }
    }
    unique
}

impl SplitAudit {
    /// Aligned text report: split totals, then one line per endpoint.
    pub fn render(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>10} {:>10} {:>9}",
            "Total", "Unique", "Labeled %", "Missing %", "Active %"
        );
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>10.1} {:>10.1} {:>9.1}",
            self.total_rows, self.unique_molecules, self.overall.labeled_pct, self.overall.missing_pct, self.overall.active_pct
        );
        if self.excluded_rows > 0 {
            let _ = writeln!(out, "excluded rows (unparseable SMILES): {}", self.excluded_rows);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:>6} {:>7} {:>6}", "Assay", "Lab.%", "Miss.%", "Act.%");
        for e in &self.endpoints {
            let _ = writeln!(
                out,
                "{:<14} {:>6.1} {:>7.1} {:>6.1}",
                e.endpoint.name(),
                e.stats.labeled_pct,
                e.stats.missing_pct,
                e.stats.active_pct
            );
        }
        out
    }
}
