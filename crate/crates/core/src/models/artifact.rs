//! Model artifact directory: `manifest.json`, `weights.bin`, `pipeline.bin`.
//!
//! `weights.bin` starts with the 16-byte header `TXBWGHT\0`, u32 version,
//! u32 reserved, then a u8 model kind, the pipeline reference string and the
//! kind-specific parameters as little-endian f64 in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::knn::{KnnError, SparseRow};
use super::linear::LinearModel;
use super::snn::{DenseLayer, SnnModel};
use super::{
    train_linear, train_snn, KnnConfig, KnnModel, Model, ModelKind, Probabilities, SnnConfig, TrainConfig, TrainError,
};
use crate::binio::{BinError, Reader, Writer};
use crate::chem::{parse_smiles, ParseError};
use crate::dataset::{LabelMatrix, LabelRow, ENDPOINT_COUNT};
use crate::featurize::{featurize_smiles, fit_pipeline, FeatureLayout, Featurizer, FittedPipeline, PipelineConfig, PipelineError};
use crate::hash::{sha256_hex, ContentHasher};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const PIPELINE_FILE: &str = "pipeline.bin";
pub const MANIFEST_VERSION: u32 = 1;

const WEIGHTS_MAGIC: &[u8; 8] = b"TXBWGHT\0";
const WEIGHTS_VERSION: u32 = 1;

/// Model-specific hyperparameters, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    Linear(TrainConfig),
    Snn(SnnConfig),
    Knn(KnnConfig),
}

impl Hyperparameters {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Linear => Hyperparameters::Linear(TrainConfig::default()),
            ModelKind::Snn => Hyperparameters::Snn(SnnConfig::default()),
            ModelKind::Knn => Hyperparameters::Knn(KnnConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Linear(_) => ModelKind::Linear,
            Hyperparameters::Snn(_) => ModelKind::Snn,
            Hyperparameters::Knn(_) => ModelKind::Knn,
        }
    }

    /// Training seed; the neighbour model has none.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Hyperparameters::Linear(c) => Some(c.seed),
            Hyperparameters::Snn(c) => Some(c.optimizer.seed),
            Hyperparameters::Knn(_) => None,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Hyperparameters::Linear(c) => c.seed = seed,
            Hyperparameters::Snn(c) => c.optimizer.seed = seed,
            Hyperparameters::Knn(_) => {}
        }
    }
}

/// Everything needed to reproduce a training run from a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub model: Hyperparameters,
}

impl ModelSpec {
    /// Per-model defaults. The linear model keeps correlated features; the
    /// penalty handles redundancy there.
    pub fn new(kind: ModelKind) -> Self {
        let pipeline = match kind {
            ModelKind::Linear => PipelineConfig { correlation_threshold: None, ..PipelineConfig::default() },
            _ => PipelineConfig::default(),
        };
        ModelSpec {
            name: format!("toxbench-{kind}"),
            version: "1.0.0".to_string(),
            pipeline,
            model: Hyperparameters::defaults(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub name: String,
    pub version: String,
    pub spec: ModelSpec,
    pub seed: Option<u64>,
    /// SHA-256 of `pipeline.bin`.
    pub pipeline_hash: String,
    /// SHA-256 of `weights.bin`.
    pub weights_hash: String,
    pub feature_definition_hash: String,
    pub input_width: usize,
    pub training_rows: usize,
    /// SHA-256 over training ids, SMILES and labels.
    pub training_data_hash: String,
    pub final_loss: Option<f64>,
    pub toolkit_version: String,
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("{file}: {source} (file is {size} bytes)")]
    Format { file: &'static str, size: usize, source: BinError },
    #[error("{file}: {source}")]
    Pipeline { file: &'static str, source: PipelineError },
    #[error("{file} hash mismatch: manifest records {expected}, file has {found}")]
    HashMismatch { file: &'static str, expected: String, found: String },
    #[error("model was trained on pipeline {model}, manifest names {manifest}")]
    PipelineRef { model: String, manifest: String },
    #[error("width mismatch: {0}")]
    Width(String),
    #[error("manifest kind {manifest} but weights hold a {weights} model")]
    Kind { manifest: ModelKind, weights: ModelKind },
    #[error("unsupported manifest format version {0}")]
    Version(u32),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("training row {row} ({id}): {source}")]
    Parse { row: usize, id: String, source: ParseError },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

/// A trained model with the pipeline feeding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub manifest: Manifest,
    pub model: Model,
    pub pipeline: FittedPipeline,
}

fn training_data_hash(data: &LabelMatrix) -> String {
    let mut h = ContentHasher::new();
    for i in 0..data.len() {
        h.update(data.id(i).as_bytes());
        h.update(b"\0");
        h.update(data.smiles_of(i).as_bytes());
        h.update(b"\0");
        for cell in data.row(i) {
            h.update(&[label_byte(*cell)]);
        }
    }
    h.finish()
}

fn label_byte(cell: Option<bool>) -> u8 {
    match cell {
        None => 0,
        Some(false) => 1,
        Some(true) => 2,
    }
}

/// Featurizes the training split, fits the pipeline and trains the model.
pub fn fit_artifact(data: &LabelMatrix, spec: &ModelSpec) -> Result<Artifact, FitError> {
    let featurizer = Featurizer::standard();
    let mut raw = Vec::with_capacity(data.len());
    for (row, result) in featurize_smiles(data.smiles()).into_iter().enumerate() {
        raw.push(result.map_err(|source| FitError::Parse { row, id: data.id(row).to_string(), source })?.into_inner());
    }
    let pipeline = fit_pipeline(&raw, &spec.pipeline, &featurizer.definition_hash())?;
    let pipeline_hash = pipeline.content_hash();
    let truth = data.rows();
    let (model, final_loss) = match &spec.model {
        Hyperparameters::Linear(cfg) => {
            let xs = apply_all(&pipeline, &raw)?;
            let (m, loss) = train_linear(&xs, truth, cfg, &pipeline_hash)?;
            (Model::Linear(m), Some(loss))
        }
        Hyperparameters::Snn(cfg) => {
            let xs = apply_all(&pipeline, &raw)?;
            let (m, loss) = train_snn(&xs, truth, cfg, &pipeline_hash)?;
            (Model::Snn(m), Some(loss))
        }
        Hyperparameters::Knn(cfg) => {
            let fps: Vec<&[f64]> = raw.iter().map(|r| &r[FeatureLayout::ecfp()]).collect();
            (Model::Knn(KnnModel::new(cfg.k, FeatureLayout::ECFP_WIDTH, &fps, truth, &pipeline_hash)?), None)
        }
    };
    Ok(Artifact::new(spec.clone(), model, pipeline, data.len(), training_data_hash(data), final_loss))
}

fn apply_all(pipeline: &FittedPipeline, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PipelineError> {
    raw.iter().map(|r| pipeline.apply(r)).collect()
}

impl Artifact {
    pub fn new(
        spec: ModelSpec,
        model: Model,
        pipeline: FittedPipeline,
        training_rows: usize,
        training_data_hash: String,
        final_loss: Option<f64>,
    ) -> Self {
        let manifest = Manifest {
            format_version: MANIFEST_VERSION,
            kind: model.kind(),
            name: spec.name.clone(),
            version: spec.version.clone(),
            seed: spec.model.seed(),
            spec,
            pipeline_hash: pipeline.content_hash(),
            weights_hash: sha256_hex(&encode_weights(&model)),
            feature_definition_hash: pipeline.definition_hash.clone(),
            input_width: model.input_width(),
            training_rows,
            training_data_hash,
            final_loss,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        Artifact { manifest, model, pipeline }
    }

    pub fn save(&self, dir: &Path) -> Result<(), ArtifactError> {
        fs::create_dir_all(dir).map_err(|source| ArtifactError::Io { path: dir.to_path_buf(), source })?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|source| ArtifactError::Io { path, source })
        };
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        write(MANIFEST_FILE, manifest.as_bytes())?;
        write(WEIGHTS_FILE, &encode_weights(&self.model))?;
        write(PIPELINE_FILE, &self.pipeline.to_bytes())
    }

    /// Reads and cross-checks the three files.
    pub fn load(dir: &Path) -> Result<Artifact, ArtifactError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| ArtifactError::Io { path, source })
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?)
            .map_err(|source| ArtifactError::Manifest { path: manifest_path, source })?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(ArtifactError::Version(manifest.format_version));
        }
        let weights_bytes = read(WEIGHTS_FILE)?;
        let pipeline_bytes = read(PIPELINE_FILE)?;
        let model = decode_weights(&weights_bytes)
            .map_err(|source| ArtifactError::Format { file: WEIGHTS_FILE, size: weights_bytes.len(), source })?;
        let pipeline = FittedPipeline::from_bytes(&pipeline_bytes)
            .map_err(|source| ArtifactError::Pipeline { file: PIPELINE_FILE, source })?;
        for (file, expected, bytes) in
            [(WEIGHTS_FILE, &manifest.weights_hash, &weights_bytes), (PIPELINE_FILE, &manifest.pipeline_hash, &pipeline_bytes)]
        {
            let found = sha256_hex(bytes);
            if &found != expected {
                return Err(ArtifactError::HashMismatch { file, expected: expected.clone(), found });
            }
        }
        if model.pipeline_ref() != manifest.pipeline_hash {
            return Err(ArtifactError::PipelineRef {
                model: model.pipeline_ref().to_string(),
                manifest: manifest.pipeline_hash.clone(),
            });
        }
        if model.kind() != manifest.kind {
            return Err(ArtifactError::Kind { manifest: manifest.kind, weights: model.kind() });
        }
        let expected_input = match model.kind() {
            ModelKind::Knn => FeatureLayout::ECFP_WIDTH,
            _ => pipeline.output_width(),
        };
        if model.input_width() != expected_input || manifest.input_width != expected_input {
            return Err(ArtifactError::Width(format!(
                "model takes {} inputs, manifest records {}, pipeline provides {expected_input}",
                model.input_width(),
                manifest.input_width
            )));
        }
        if pipeline.input_width != FeatureLayout::TOTAL {
            return Err(ArtifactError::Width(format!(
                "pipeline expects {} raw features, the feature layout has {}",
                pipeline.input_width,
                FeatureLayout::TOTAL
            )));
        }
        Ok(Artifact { manifest, model, pipeline })
    }

    /// Prediction from a full-layout raw feature vector.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<Probabilities, PipelineError> {
        match &self.model {
            Model::Knn(_) => {
                if raw.len() != FeatureLayout::TOTAL {
                    return Err(PipelineError::LayoutMismatch { found: raw.len(), expected: FeatureLayout::TOTAL });
                }
                Ok(self.model.predict(&raw[FeatureLayout::ecfp()]))
            }
            model => Ok(model.predict(&self.pipeline.apply(raw)?)),
        }
    }

    pub fn predict_smiles(&self, smiles: &str) -> Result<Probabilities, ParseError> {
        let mol = parse_smiles(smiles)?;
        let raw = Featurizer::standard().assemble(&mol);
        Ok(self.predict_raw(&raw).expect("assembled vectors match the pipeline layout"))
    }
}

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Linear => 1,
        ModelKind::Snn => 2,
        ModelKind::Knn => 3,
    }
}

pub fn encode_weights(model: &Model) -> Vec<u8> {
    let mut w = Writer::header(WEIGHTS_MAGIC, WEIGHTS_VERSION);
    w.u8(kind_code(model.kind()));
    w.str(model.pipeline_ref());
    match model {
        Model::Linear(m) => {
            w.usize(m.width);
            w.f64s(&m.weights);
            w.f64s(&m.bias);
        }
        Model::Snn(m) => {
            w.f64(m.dropout);
            w.usize(m.layers.len());
            for layer in &m.layers {
                w.usize(layer.inputs);
                w.usize(layer.outputs);
                w.f64s(&layer.weights);
                w.f64s(&layer.bias);
            }
        }
        Model::Knn(m) => {
            w.usize(m.k);
            w.usize(m.width);
            w.usize(m.fingerprints.len());
            for (fp, labels) in m.fingerprints.iter().zip(&m.labels) {
                for cell in labels {
                    w.u8(label_byte(*cell));
                }
                w.usize(fp.len());
                for &(i, v) in fp {
                    w.u32(i);
                    w.f64(v);
                }
            }
        }
    }
    w.finish()
}

pub fn decode_weights(data: &[u8]) -> Result<Model, BinError> {
    let (mut r, version) = Reader::header(data, WEIGHTS_MAGIC)?;
    if version != WEIGHTS_VERSION {
        return Err(r.error(format!("unsupported weights format version {version}")));
    }
    let kind = r.u8()?;
    let pipeline_ref = r.str()?;
    let model = match kind {
        1 => {
            let width = r.count(8 * ENDPOINT_COUNT)?;
            let weights = r.f64s(width * ENDPOINT_COUNT)?;
            let bias = r.f64s(ENDPOINT_COUNT)?;
            Model::Linear(LinearModel { width, weights, bias, pipeline_ref })
        }
        2 => {
            let dropout = r.f64()?;
            let n = r.count(16)?;
            let mut layers: Vec<DenseLayer> = Vec::with_capacity(n);
            for l in 0..n {
                let inputs = r.count(8)?;
                let outputs = r.count(8)?;
                if inputs == 0 || outputs == 0 || layers.last().is_some_and(|p| p.outputs != inputs) {
                    return Err(r.error(format!("layer {l} shape {outputs}x{inputs} does not chain")));
                }
                let weights = r.f64s(inputs.checked_mul(outputs).ok_or_else(|| r.error("layer too large"))?)?;
                let bias = r.f64s(outputs)?;
                layers.push(DenseLayer { inputs, outputs, weights, bias });
            }
            if layers.last().map(|l| l.outputs) != Some(ENDPOINT_COUNT) {
                return Err(r.error("last layer must have 12 outputs"));
            }
            Model::Snn(SnnModel { layers, dropout, pipeline_ref })
        }
        3 => {
            let k = r.usize()?;
            let width = r.usize()?;
            let rows = r.count(ENDPOINT_COUNT + 8)?;
            let mut fingerprints: Vec<SparseRow> = Vec::with_capacity(rows);
            let mut labels: Vec<LabelRow> = Vec::with_capacity(rows);
            for _ in 0..rows {
                let mut row = [None; ENDPOINT_COUNT];
                for cell in row.iter_mut() {
                    *cell = match r.u8()? {
                        0 => None,
                        1 => Some(false),
                        2 => Some(true),
                        other => return Err(r.error(format!("bad label code {other}"))),
                    };
                }
                let nnz = r.count(12)?;
                let mut fp = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    let i = r.u32()?;
                    if i as usize >= width || fp.last().is_some_and(|&(p, _): &(u32, f64)| p >= i) {
                        return Err(r.error("fingerprint indices must increase within the width"));
                    }
                    fp.push((i, r.f64()?));
                }
                labels.push(row);
                fingerprints.push(fp);
            }
            let model = KnnModel::from_sparse(k, width, fingerprints, labels, pipeline_ref)
                .map_err(|e| r.error(e.to_string()))?;
            Model::Knn(model)
        }
        other => return Err(r.error(format!("unknown model kind code {other}"))),
    };
    r.finish()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_toml_shape() {
        let spec: ModelSpec = serde_json::from_str(
            r#"{"name":"m","version":"1","model":{"kind":"snn","hidden":[8],"optimizer":{"epochs":3}}}"#,
        )
        .unwrap();
        match &spec.model {
            Hyperparameters::Snn(c) => {
                assert_eq!(c.hidden, vec![8]);
                assert_eq!(c.optimizer.epochs, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<ModelSpec>(r#"{"name":"m","version":"1","model":{"kind":"linear","bogus":1}}"#).is_err());
    }

    #[test]
    fn weights_roundtrip() {
        let snn = Model::Snn(SnnModel::new(5, &[4], 0.1, 1, "abc"));
        assert_eq!(decode_weights(&encode_weights(&snn)).unwrap(), snn);
        let mut lin = LinearModel::zeros(3, "abc");
        lin.weights[7] = -1.5;
        let lin = Model::Linear(lin);
        assert_eq!(decode_weights(&encode_weights(&lin)).unwrap(), lin);
        let mut labels = [[None; 12]; 2];
        labels[0][1] = Some(true);
        labels[1][1] = Some(false);
        let knn = Model::Knn(KnnModel::new(1, 4, &[vec![0.0, 1.0, 0.0, 2.0], vec![3.0; 4]], &labels, "abc").unwrap());
        let bytes = encode_weights(&knn);
        assert_eq!(decode_weights(&bytes).unwrap(), knn);
        assert!(decode_weights(&bytes[..bytes.len() - 3]).is_err());
    }
}
