//! Tanimoto k-nearest-neighbour baseline over fingerprint count vectors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Probabilities;
use crate::dataset::{LabelRow, ENDPOINT_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnnError {
    #[error("fingerprint width {found}, expected {expected}")]
    Width { found: usize, expected: usize },
    #[error("k must be between 1 and the number of stored rows ({rows}), got {k}")]
    K { k: usize, rows: usize },
    #[error("{fingerprints} fingerprints but {labels} label rows")]
    RowCount { fingerprints: usize, labels: usize },
    #[error("fingerprint {row} has a negative or non-finite entry")]
    Value { row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

/// Sum of element-wise minima over sum of maxima; 1 for two zero vectors.
pub fn tanimoto(a: &[f64], b: &[f64]) -> Result<f64, KnnError> {
    if a.len() != b.len() {
        return Err(KnnError::Width { found: b.len(), expected: a.len() });
    }
    let (mut lo, mut hi) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        lo += x.min(*y);
        hi += x.max(*y);
    }
    Ok(if hi == 0.0 { 1.0 } else { lo / hi })
}

/// Nonzero entries as (index, value), ascending by index.
pub type SparseRow = Vec<(u32, f64)>;

fn sparsify(v: &[f64]) -> SparseRow {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, &x)| (i as u32, x)).collect()
}

/// [`tanimoto`] over non-negative sparse rows.
fn sparse_tanimoto(a: &SparseRow, b: &SparseRow) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.0);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ia = a.get(i).map_or(u32::MAX, |e| e.0);
        let jb = b.get(j).map_or(u32::MAX, |e| e.0);
        if ia == jb {
            lo += a[i].1.min(b[j].1);
            hi += a[i].1.max(b[j].1);
            i += 1;
            j += 1;
        } else if ia < jb {
            hi += a[i].1;
            i += 1;
        } else {
            hi += b[j].1;
            j += 1;
        }
    }
    if hi == 0.0 {
        1.0
    } else {
        lo / hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub width: usize,
    pub fingerprints: Vec<SparseRow>,
    pub labels: Vec<LabelRow>,
    pub pipeline_ref: String,
}

impl KnnModel {
    pub fn new<R: AsRef<[f64]>>(
        k: usize,
        width: usize,
        fingerprints: &[R],
        labels: &[LabelRow],
        pipeline_ref: impl Into<String>,
    ) -> Result<Self, KnnError> {
        if fingerprints.len() != labels.len() {
            return Err(KnnError::RowCount { fingerprints: fingerprints.len(), labels: labels.len() });
        }
        let mut rows = Vec::with_capacity(fingerprints.len());
        for (row, f) in fingerprints.iter().enumerate() {
            let f = f.as_ref();
            if f.len() != width {
                return Err(KnnError::Width { found: f.len(), expected: width });
            }
            if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(KnnError::Value { row });
            }
            rows.push(sparsify(f));
        }
        KnnModel::from_sparse(k, width, rows, labels.to_vec(), pipeline_ref.into())
    }

    pub fn from_sparse(
        k: usize,
        width: usize,
        fingerprints: Vec<SparseRow>,
        labels: Vec<LabelRow>,
        pipeline_ref: String,
    ) -> Result<Self, KnnError> {
        if k == 0 || k > fingerprints.len() {
            return Err(KnnError::K { k, rows: fingerprints.len() });
        }
        Ok(KnnModel { k, width, fingerprints, labels, pipeline_ref })
    }
}

/// Per endpoint, the similarity-weighted label mean of the `k` most similar
/// stored rows that carry that endpoint's label. Equal similarities keep
/// storage order. An endpoint without any stored label predicts 0.5; if all
/// selected neighbours have similarity 0 the plain mean is used.
pub fn knn_predict(model: &KnnModel, fingerprint: &[f64]) -> Result<Probabilities, KnnError> {
    if fingerprint.len() != model.width {
        return Err(KnnError::Width { found: fingerprint.len(), expected: model.width });
    }
    let query = sparsify(fingerprint);
    let mut ranked: Vec<(f64, usize)> =
        model.fingerprints.iter().enumerate().map(|(i, f)| (sparse_tanimoto(&query, f), i)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = [0.5; ENDPOINT_COUNT];
    for (k, slot) in out.iter_mut().enumerate() {
        let neighbours: Vec<(f64, f64)> = ranked
            .iter()
            .filter_map(|&(s, i)| model.labels[i][k].map(|y| (s, f64::from(u8::from(y)))))
            .take(model.k)
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let weight: f64 = neighbours.iter().map(|n| n.0).sum();
        *slot = if weight > 0.0 {
            neighbours.iter().map(|(s, y)| s * y).sum::<f64>() / weight
        } else {
            neighbours.iter().map(|n| n.1).sum::<f64>() / neighbours.len() as f64
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanimoto_examples() {
        assert_eq!(tanimoto(&[2.0, 1.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(tanimoto(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(tanimoto(&[0.0; 4], &[0.0; 4]).unwrap(), 1.0);
        assert_eq!(tanimoto(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 1.0);
        assert!(tanimoto(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let a = [0.0, 2.0, 0.0, 5.0, 1.0];
        let b = [1.0, 2.0, 0.0, 0.0, 3.0];
        assert_eq!(sparse_tanimoto(&sparsify(&a), &sparsify(&b)), tanimoto(&a, &b).unwrap());
    }

    #[test]
    fn skips_unlabelled_neighbours() {
        let fps = [vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]];
        let mut labels = [[None; 12]; 3];
        labels[1][0] = Some(true);
        labels[2][0] = Some(false);
        let m = KnnModel::new(1, 2, &fps, &labels, "p").unwrap();
        let p = knn_predict(&m, &[1.0, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[5], 0.5);
    }

    #[test]
    fn uniform_similarity_gives_prior() {
        let fps = vec![vec![1.0]; 4];
        let mut labels = [[None; 12]; 4];
        labels[0][3] = Some(true);
        labels[1][3] = Some(false);
        labels[2][3] = Some(false);
        let m = KnnModel::new(4, 1, &fps, &labels, "p").unwrap();
        let p = knn_predict(&m, &[1.0]).unwrap();
        assert!((p[3] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn k_bounds() {
        assert!(KnnModel::new(0, 1, &[vec![1.0]], &[[None; 12]], "p").is_err());
        assert!(KnnModel::new(2, 1, &[vec![1.0]], &[[None; 12]], "p").is_err());
    }
}
