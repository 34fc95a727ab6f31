//! The `/predict` wire contract: request and response bodies, their canonical
//! JSON encoding, and completeness validation.
//!
//! Request: `{"smiles": ["CCO", ...]}`. Response:
//! `{"predictions": {"<smiles>": {"<endpoint>": p, ...}}, "model_info": {"name": ..., "version": ...}}`.
//! Canonical encoding sorts object keys and writes numbers in shortest
//! round-trip form. Non-finite values travel as `null`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::dataset::{Endpoint, ENDPOINT_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub smiles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct DecodeError {
    /// JSON path of the offending element, `.` for the document root.
    pub path: String,
    pub message: String,
}

impl PredictRequest {
    /// Checks the body invariants: non-empty, no empty or repeated entries.
    pub fn new(smiles: Vec<String>) -> Result<Self, DecodeError> {
        let req = PredictRequest { smiles };
        req.check()?;
        Ok(req)
    }

    fn check(&self) -> Result<(), DecodeError> {
        let err = |path: String, message: &str| Err(DecodeError { path, message: message.to_string() });
        if self.smiles.is_empty() {
            return err("smiles".into(), "at least one SMILES is required");
        }
        let mut seen = HashSet::with_capacity(self.smiles.len());
        for (i, s) in self.smiles.iter().enumerate() {
            if s.is_empty() {
                return err(format!("smiles[{i}]"), "empty SMILES");
            }
            if !seen.insert(s.as_str()) {
                return err(format!("smiles[{i}]"), "duplicate SMILES within one request");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictResponse {
    #[serde(deserialize_with = "nullable_predictions")]
    pub predictions: BTreeMap<String, BTreeMap<String, f64>>,
    pub model_info: BTreeMap<String, String>,
}

fn nullable_predictions<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, BTreeMap<String, f64>>, D::Error> {
    let raw = BTreeMap::<String, BTreeMap<String, Option<f64>>>::deserialize(d)?;
    Ok(raw.into_iter().map(|(s, m)| (s, m.into_iter().map(|(e, v)| (e, v.unwrap_or(f64::NAN))).collect())).collect())
}

impl PredictResponse {
    pub fn new(model_name: &str, model_version: &str) -> Self {
        let model_info = BTreeMap::from([
            ("name".to_string(), model_name.to_string()),
            ("version".to_string(), model_version.to_string()),
        ]);
        PredictResponse { predictions: BTreeMap::new(), model_info }
    }

    pub fn insert(&mut self, smiles: &str, values: &[f64; ENDPOINT_COUNT]) {
        let entry = Endpoint::ALL.iter().map(|e| (e.name().to_string(), values[e.index()])).collect();
        self.predictions.insert(smiles.to_string(), entry);
    }

    /// All twelve values for one molecule, if every endpoint is present.
    pub fn probabilities(&self, smiles: &str) -> Option<[f64; ENDPOINT_COUNT]> {
        let m = self.predictions.get(smiles)?;
        let mut out = [0.0; ENDPOINT_COUNT];
        for e in Endpoint::ALL {
            out[e.index()] = *m.get(e.name())?;
        }
        Some(out)
    }
}

fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, DecodeError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| DecodeError { path: e.path().to_string(), message: e.inner().to_string() })?;
    de.end().map_err(|e| DecodeError { path: ".".into(), message: e.to_string() })?;
    Ok(value)
}

pub fn encode_request(req: &PredictRequest) -> String {
    serde_json::to_string(req).expect("request serializes")
}

pub fn decode_request(text: &str) -> Result<PredictRequest, DecodeError> {
    let req: PredictRequest = decode(text)?;
    req.check()?;
    Ok(req)
}

pub fn encode_response(resp: &PredictResponse) -> String {
    serde_json::to_string(resp).expect("response serializes")
}

pub fn decode_response(text: &str) -> Result<PredictResponse, DecodeError> {
    decode(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingMolecule,
    MissingTarget,
    ExtraKey,
    NonFinite,
    OutOfRange,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub smiles: Option<String>,
    pub endpoint: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Lists every way `resp` falls short of a complete, well-formed answer to
/// `req`, in request order.
pub fn validate_response(req: &PredictRequest, resp: &PredictResponse) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind, smiles: Option<&str>, endpoint: Option<&str>, detail: String| {
        violations.push(Violation {
            kind,
            smiles: smiles.map(str::to_string),
            endpoint: endpoint.map(str::to_string),
            detail,
        })
    };
    for key in ["name", "version"] {
        if !resp.model_info.contains_key(key) {
            push(ViolationKind::Malformed, None, None, format!("model_info lacks \"{key}\""));
        }
    }
    let requested: HashSet<&str> = req.smiles.iter().map(String::as_str).collect();
    for s in &req.smiles {
        let Some(values) = resp.predictions.get(s) else {
            push(ViolationKind::MissingMolecule, Some(s), None, "no predictions for this SMILES".into());
            continue;
        };
        for e in Endpoint::ALL {
            match values.get(e.name()) {
                None => push(ViolationKind::MissingTarget, Some(s), Some(e.name()), "endpoint missing".into()),
                Some(v) if !v.is_finite() => push(ViolationKind::NonFinite, Some(s), Some(e.name()), format!("value {v}")),
                Some(v) if !(0.0..=1.0).contains(v) => {
                    push(ViolationKind::OutOfRange, Some(s), Some(e.name()), format!("value {v} outside [0, 1]"))
                }
                Some(_) => {}
            }
        }
        for name in values.keys().filter(|k| Endpoint::from_name(k).is_none()) {
            push(ViolationKind::ExtraKey, Some(s), Some(name), "unknown endpoint".into());
        }
    }
    for s in resp.predictions.keys().filter(|s| !requested.contains(s.as_str())) {
        push(ViolationKind::ExtraKey, Some(s), None, "SMILES was not requested".into());
    }
    ValidationReport { ok: violations.is_empty(), violations }
}
