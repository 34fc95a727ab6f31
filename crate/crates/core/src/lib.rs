//! Core library for reproducible Tox21-style bioactivity benchmarking.
//!
//! * [`chem`]: SMILES parsing into validated molecular graphs.
//! * [`featurize`]: the 9,385-wide molecular feature vector and the fitted
//!   preprocessing pipeline.
//! * [`dataset`]: the twelve endpoints, sparse label matrices and split audits.
//! * [`metrics`]: masked ROC-AUC, run scores and median/MAD aggregation.
//! * [`models`]: trainable baselines and the language-model prompt adapter.
//! * [`protocol`]: the `/predict` wire format and its validation.

pub mod chem;
pub mod hash;
pub mod binio;
pub mod featurize;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod protocol;
