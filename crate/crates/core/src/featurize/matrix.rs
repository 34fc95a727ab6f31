//! On-disk feature matrices.
//!
//! Layout after the 16-byte header (`TXBFEAT\0`, version 1): u64 width,
//! u64 row count, then per row the id and SMILES as length-prefixed UTF-8,
//! a u64 non-zero count and that many (u32 column, f64 value) pairs in
//! ascending column order.

use crate::binio::{BinError, Reader, Writer};

const MAGIC: &[u8; 8] = b"TXBFEAT\0";
const FORMAT_VERSION: u32 = 1;

/// Sparse rows with their identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub width: usize,
    pub ids: Vec<String>,
    pub smiles: Vec<String>,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn new(width: usize) -> Self {
        FeatureMatrix { width, ids: Vec::new(), smiles: Vec::new(), rows: Vec::new() }
    }

    /// Appends a dense row, keeping its non-zero entries.
    pub fn push(&mut self, id: &str, smiles: &str, dense: &[f64]) {
        assert_eq!(dense.len(), self.width, "row width");
        self.ids.push(id.to_string());
        self.smiles.push(smiles.to_string());
        self.rows.push(dense.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j as u32, *v)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for &(j, v) in &self.rows[i] {
            out[j as usize] = v;
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::header(MAGIC, FORMAT_VERSION);
        w.usize(self.width);
        w.usize(self.rows.len());
        for ((id, smi), row) in self.ids.iter().zip(&self.smiles).zip(&self.rows) {
            w.str(id);
            w.str(smi);
            w.usize(row.len());
            for &(j, v) in row {
                w.u32(j);
                w.f64(v);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, BinError> {
        let (mut r, version) = Reader::header(data, MAGIC)?;
        if version != FORMAT_VERSION {
            return Err(r.error(format!("unsupported feature matrix version {version}")));
        }
        let width = r.usize()?;
        let n = r.count(24)?;
        let mut m = FeatureMatrix::new(width);
        for _ in 0..n {
            m.ids.push(r.str()?);
            m.smiles.push(r.str()?);
            let nnz = r.count(12)?;
            let mut row = Vec::with_capacity(nnz);
            let mut last: Option<u32> = None;
            for _ in 0..nnz {
                let j = r.u32()?;
                if j as usize >= width || last.is_some_and(|l| j <= l) {
                    return Err(r.error(format!("column {j} out of order or range")));
                }
                last = Some(j);
                row.push((j, r.f64()?));
            }
            m.rows.push(row);
        }
        r.finish()?;
        Ok(m)
    }
}
