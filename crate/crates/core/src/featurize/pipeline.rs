//! Feature filtering, quantization and normalization fitted on a training
//! matrix and replayed on single vectors.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FeatureLayout;
use crate::binio::{BinError, Reader, Writer};
use crate::hash::{sha256_hex, ContentHasher};

/// Lower bound applied to standard deviations during normalization.
pub const STD_FLOOR: f64 = 1e-8;

const MAGIC: &[u8; 8] = b"TXBPIPE\0";
const FORMAT_VERSION: u32 = 1;

/// `None` disables the corresponding filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub variance_threshold: Option<f64>,
    pub correlation_threshold: Option<f64>,
    pub quantize: bool,
    pub normalize: bool,
    pub top_k_variance: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variance_threshold: Some(0.0),
            correlation_threshold: Some(0.95),
            quantize: false,
            normalize: true,
            top_k_variance: None,
        }
    }
}

impl PipelineConfig {
    /// Every stage disabled.
    pub fn identity() -> Self {
        PipelineConfig {
            variance_threshold: None,
            correlation_threshold: None,
            quantize: false,
            normalize: false,
            top_k_variance: None,
        }
    }

    pub fn validate(&self, width: usize) -> Result<(), PipelineError> {
        if let Some(v) = self.variance_threshold {
            if !v.is_finite() || v < 0.0 {
                return Err(PipelineError::Config(format!("variance_threshold must be finite and >= 0, got {v}")));
            }
        }
        if let Some(c) = self.correlation_threshold {
            if !(c > 0.0 && c <= 1.0) {
                return Err(PipelineError::Config(format!("correlation_threshold must be in (0, 1], got {c}")));
            }
        }
        if let Some(k) = self.top_k_variance {
            if k == 0 || k > width {
                return Err(PipelineError::Config(format!("top_k_variance must be in 1..={width}, got {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("row {row} has {found} features, expected {expected}")]
    RowWidth { row: usize, found: usize, expected: usize },
    #[error("non-finite value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("vector has {found} features, pipeline expects {expected}")]
    LayoutMismatch { found: usize, expected: usize },
    #[error("pipeline file: {0}")]
    Format(#[from] BinError),
}

/// Quartile bin edges (min, q1, q2, q3, max) of one training column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles(pub [f64; 5]);

impl Quartiles {
    fn from_sorted(sorted: &[f64]) -> Self {
        Quartiles([
            sorted[0],
            quantile(sorted, 0.25),
            quantile(sorted, 0.5),
            quantile(sorted, 0.75),
            sorted[sorted.len() - 1],
        ])
    }

    /// Midpoint of the bin containing `x`; values outside the training range
    /// fall into the outer bins.
    pub fn quantize(&self, x: f64) -> f64 {
        let e = &self.0;
        let bin = if x <= e[1] {
            0
        } else if x <= e[2] {
            1
        } else if x <= e[3] {
            2
        } else {
            3
        };
        0.5 * (e[bin] + e[bin + 1])
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub input_width: usize,
    /// Input positions eligible for quantization.
    pub quantize_range: Range<usize>,
    /// Strictly increasing input positions that survive filtering.
    pub kept_indices: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Per kept feature; `Some` only for quantized features.
    pub quartiles: Vec<Option<Quartiles>>,
    pub fit_rows: usize,
    /// SHA-256 over the training matrix (row-major little-endian f64).
    pub fit_content_hash: String,
    /// Hash of the feature definitions the matrix was produced with.
    pub definition_hash: String,
}

/// Fits on full-layout rows; quantization applies to the descriptor block.
pub fn fit_pipeline<R: AsRef<[f64]>>(
    matrix: &[R],
    cfg: &PipelineConfig,
    definition_hash: &str,
) -> Result<FittedPipeline, PipelineError> {
    if let Some((row, r)) = matrix.iter().enumerate().find(|(_, r)| r.as_ref().len() != FeatureLayout::TOTAL) {
        return Err(PipelineError::RowWidth { row, found: r.as_ref().len(), expected: FeatureLayout::TOTAL });
    }
    fit_pipeline_with(matrix, cfg, FeatureLayout::descriptors(), definition_hash)
}

/// Fits on rows of any common width with an explicit quantization range.
pub fn fit_pipeline_with<R: AsRef<[f64]>>(
    matrix: &[R],
    cfg: &PipelineConfig,
    quantize_range: Range<usize>,
    definition_hash: &str,
) -> Result<FittedPipeline, PipelineError> {
    let first = matrix.first().ok_or(PipelineError::EmptyMatrix)?;
    let width = first.as_ref().len();
    cfg.validate(width)?;
    let mut hasher = ContentHasher::new();
    for (row, r) in matrix.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != width {
            return Err(PipelineError::RowWidth { row, found: r.len(), expected: width });
        }
        if let Some(feature) = r.iter().position(|v| !v.is_finite()) {
            return Err(PipelineError::NonFinite { row, feature });
        }
        for &v in r {
            hasher.update_f64(v);
        }
    }
    let n = matrix.len() as f64;
    let column = |j: usize| matrix.iter().map(move |r| r.as_ref()[j]);

    let mut mean = vec![0.0; width];
    for r in matrix {
        for (m, &v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for r in matrix {
        for ((s, &v), &m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);

    let mut survivors: Vec<usize> = match cfg.variance_threshold {
        Some(t) => (0..width).filter(|&j| var[j] > t).collect(),
        None => (0..width).collect(),
    };

    if let Some(threshold) = cfg.correlation_threshold {
        survivors = correlation_filter(&survivors, threshold, |j| column(j).collect(), &mean, &var);
    }

    if let Some(k) = cfg.top_k_variance {
        let mut ranked = survivors.clone();
        ranked.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
        ranked.truncate(k);
        ranked.sort_unstable();
        survivors = ranked;
    }

    let mut means = Vec::with_capacity(survivors.len());
    let mut stds = Vec::with_capacity(survivors.len());
    let mut quartiles = Vec::with_capacity(survivors.len());
    for &j in &survivors {
        let q = (cfg.quantize && quantize_range.contains(&j)).then(|| {
            let mut sorted: Vec<f64> = column(j).collect();
            sorted.sort_by(f64::total_cmp);
            Quartiles::from_sorted(&sorted)
        });
        let values: Vec<f64> = match &q {
            Some(q) => column(j).map(|x| q.quantize(x)).collect(),
            None => column(j).collect(),
        };
        let m = values.iter().sum::<f64>() / n;
        let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        means.push(m);
        stds.push(v.sqrt());
        quartiles.push(q);
    }

    Ok(FittedPipeline {
        config: cfg.clone(),
        input_width: width,
        quantize_range,
        kept_indices: survivors,
        means,
        stds,
        quartiles,
        fit_rows: matrix.len(),
        fit_content_hash: hasher.finish(),
        definition_hash: definition_hash.to_string(),
    })
}

/// Greedy scan in ascending index order: a column is dropped when its
/// absolute Pearson correlation with any already-kept column exceeds the
/// threshold. Zero-variance columns correlate with nothing.
fn correlation_filter(
    candidates: &[usize],
    threshold: f64,
    column: impl Fn(usize) -> Vec<f64>,
    mean: &[f64],
    var: &[f64],
) -> Vec<usize> {
    // unit-norm centred columns: the dot product is the correlation
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    for &j in candidates {
        if var[j] <= 0.0 {
            kept.push(j);
            continue;
        }
        let mut z = column(j);
        let mut norm = 0.0;
        for x in z.iter_mut() {
            *x -= mean[j];
            norm += *x * *x;
        }
        let norm = norm.sqrt();
        z.iter_mut().for_each(|x| *x /= norm);
        let redundant = kept_cols.iter().any(|k| {
            let r: f64 = k.iter().zip(&z).map(|(a, b)| a * b).sum();
            r.abs().min(1.0) > threshold
        });
        if !redundant {
            kept.push(j);
            kept_cols.push(z);
        }
    }
    kept
}

impl FittedPipeline {
    pub fn output_width(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, PipelineError> {
        let mut out = vec![0.0; self.output_width()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), PipelineError> {
        if v.len() != self.input_width {
            return Err(PipelineError::LayoutMismatch { found: v.len(), expected: self.input_width });
        }
        assert_eq!(out.len(), self.output_width());
        for (k, (&j, slot)) in self.kept_indices.iter().zip(out.iter_mut()).enumerate() {
            let mut x = v[j];
            if let Some(q) = &self.quartiles[k] {
                x = q.quantize(x);
            }
            if self.config.normalize {
                x = (x - self.means[k]) / self.stds[k].max(STD_FLOOR);
            }
            *slot = x;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::header(MAGIC, FORMAT_VERSION);
        let opt_f64 = |w: &mut Writer, v: Option<f64>| {
            w.u8(u8::from(v.is_some()));
            w.f64(v.unwrap_or(0.0));
        };
        opt_f64(&mut w, self.config.variance_threshold);
        opt_f64(&mut w, self.config.correlation_threshold);
        w.u8(u8::from(self.config.quantize));
        w.u8(u8::from(self.config.normalize));
        w.u8(u8::from(self.config.top_k_variance.is_some()));
        w.usize(self.config.top_k_variance.unwrap_or(0));
        w.usize(self.input_width);
        w.usize(self.quantize_range.start);
        w.usize(self.quantize_range.end);
        w.usize(self.kept_indices.len());
        for &j in &self.kept_indices {
            w.usize(j);
        }
        w.f64s(&self.means);
        w.f64s(&self.stds);
        for q in &self.quartiles {
            w.u8(u8::from(q.is_some()));
            w.f64s(&q.map_or([0.0; 5], |q| q.0));
        }
        w.usize(self.fit_rows);
        w.str(&self.fit_content_hash);
        w.str(&self.definition_hash);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, PipelineError> {
        let (mut r, version) = Reader::header(data, MAGIC)?;
        if version != FORMAT_VERSION {
            return Err(r.error(format!("unsupported pipeline format version {version}")).into());
        }
        let opt_f64 = |r: &mut Reader| -> Result<Option<f64>, BinError> {
            let present = r.bool()?;
            let v = r.f64()?;
            Ok(present.then_some(v))
        };
        let variance_threshold = opt_f64(&mut r)?;
        let correlation_threshold = opt_f64(&mut r)?;
        let quantize = r.bool()?;
        let normalize = r.bool()?;
        let has_k = r.bool()?;
        let k = r.usize()?;
        let config = PipelineConfig {
            variance_threshold,
            correlation_threshold,
            quantize,
            normalize,
            top_k_variance: has_k.then_some(k),
        };
        let input_width = r.usize()?;
        let quantize_range = r.usize()?..r.usize()?;
        let count = r.count(8)?;
        let kept_indices = (0..count).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        if kept_indices.windows(2).any(|w| w[0] >= w[1]) || kept_indices.last().is_some_and(|&j| j >= input_width) {
            return Err(r.error("kept indices not strictly increasing within the input width").into());
        }
        let means = r.f64s(count)?;
        let stds = r.f64s(count)?;
        let mut quartiles = Vec::with_capacity(count);
        for _ in 0..count {
            let present = r.bool()?;
            let edges: [f64; 5] = r.f64s(5)?.try_into().expect("five values");
            quartiles.push(present.then_some(Quartiles(edges)));
        }
        let fit_rows = r.usize()?;
        let fit_content_hash = r.str()?;
        let definition_hash = r.str()?;
        r.finish()?;
        Ok(FittedPipeline {
            config,
            input_width,
            quantize_range,
            kept_indices,
            means,
            stds,
            quartiles,
            fit_rows,
            fit_content_hash,
            definition_hash,
        })
    }

    /// SHA-256 of the serialized form.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}
