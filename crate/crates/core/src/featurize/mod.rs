//! Fixed-layout molecular feature vectors and the fit/apply feature pipeline.

pub mod descriptors;
pub mod ecfp;
pub mod matrix;
pub mod pattern;
pub mod pipeline;

use std::ops::{Deref, Range};
use std::sync::OnceLock;

use thiserror::Error;

use crate::chem::{parse_smiles, Molecule, ParseError};
use crate::hash::sha256_hex;

pub use descriptors::{DescriptorSet, DescriptorSetError};
pub use ecfp::{ecfp_counts, environments, Environment, FingerprintConfig};
pub use matrix::FeatureMatrix;
pub use pattern::{MatchMode, Pattern, PatternSet, PatternSetError};
pub use pipeline::{fit_pipeline, FittedPipeline, PipelineConfig, PipelineError};

/// Block sizes of the concatenated feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout;

impl FeatureLayout {
    pub const ECFP_WIDTH: usize = 8192;
    pub const KEY_COUNT: usize = 166;
    pub const DESCRIPTOR_COUNT: usize = 200;
    pub const TOXPATTERN_COUNT: usize = 827;
    pub const TOTAL: usize = Self::ECFP_WIDTH + Self::KEY_COUNT + Self::DESCRIPTOR_COUNT + Self::TOXPATTERN_COUNT;

    pub const fn ecfp() -> Range<usize> {
        0..Self::ECFP_WIDTH
    }

    pub const fn keys() -> Range<usize> {
        Self::ECFP_WIDTH..Self::ECFP_WIDTH + Self::KEY_COUNT
    }

    pub const fn descriptors() -> Range<usize> {
        let start = Self::ECFP_WIDTH + Self::KEY_COUNT;
        start..start + Self::DESCRIPTOR_COUNT
    }

    pub const fn toxpatterns() -> Range<usize> {
        let start = Self::ECFP_WIDTH + Self::KEY_COUNT + Self::DESCRIPTOR_COUNT;
        start..Self::TOTAL
    }
}

const _: () = assert!(FeatureLayout::TOTAL == 9385);

/// A full-layout feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps `values`, which must have the full layout length.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        (values.len() == FeatureLayout::TOTAL).then_some(FeatureVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Error)]
pub enum DefinitionError {
    #[error("structural keys: {0}")]
    Keys(PatternSetError),
    #[error("descriptor list: {0}")]
    Descriptors(DescriptorSetError),
    #[error("toxicity patterns: {0}")]
    ToxPatterns(PatternSetError),
}

const STRUCTURAL_KEYS: &str = include_str!("../../data/structural_keys.tsv");
const TOX_PATTERNS: &str = include_str!("../../data/tox_patterns.tsv");
const DESCRIPTOR_LIST: &str = include_str!("../../data/descriptors.tsv");

/// Pattern sets, descriptor list and fingerprint settings behind `assemble`.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub fingerprint: FingerprintConfig,
    pub keys: PatternSet,
    pub descriptors: DescriptorSet,
    pub toxpatterns: PatternSet,
}

impl Featurizer {
    /// The shipped definitions. Compiled once per process; a defect in the
    /// shipped files panics here rather than at per-molecule time.
    pub fn standard() -> &'static Featurizer {
        static STANDARD: OnceLock<Featurizer> = OnceLock::new();
        STANDARD.get_or_init(|| {
            Featurizer::from_sources(STRUCTURAL_KEYS, DESCRIPTOR_LIST, TOX_PATTERNS)
                .unwrap_or_else(|e| panic!("shipped feature definitions are invalid: {e}"))
        })
    }

    pub fn from_sources(keys: &str, descriptors: &str, toxpatterns: &str) -> Result<Featurizer, DefinitionError> {
        Ok(Featurizer {
            fingerprint: FingerprintConfig::default(),
            keys: PatternSet::parse("structural_keys", keys, FeatureLayout::KEY_COUNT, MatchMode::Presence)
                .map_err(DefinitionError::Keys)?,
            descriptors: DescriptorSet::parse(descriptors, FeatureLayout::DESCRIPTOR_COUNT)
                .map_err(DefinitionError::Descriptors)?,
            toxpatterns: PatternSet::parse("tox_patterns", toxpatterns, FeatureLayout::TOXPATTERN_COUNT, MatchMode::Count)
                .map_err(DefinitionError::ToxPatterns)?,
        })
    }

    /// Hash identifying the feature definitions (versions and file contents).
    pub fn definition_hash(&self) -> String {
        let text = format!(
            "ecfp:{}:{}:{}\nkeys:{}\ndescriptors:{}\ntoxpatterns:{}\n",
            self.fingerprint.radius,
            self.fingerprint.width,
            self.fingerprint.counted,
            self.keys.content_hash,
            self.descriptors.content_hash,
            self.toxpatterns.content_hash
        );
        sha256_hex(text.as_bytes())
    }

    pub fn assemble(&self, mol: &Molecule) -> FeatureVector {
        let mut v = vec![0.0; FeatureLayout::TOTAL];
        ecfp::ecfp_into(mol, &self.fingerprint, &mut v[FeatureLayout::ecfp()]);
        self.keys.match_into(mol, &mut v[FeatureLayout::keys()]);
        self.descriptors.compute_into(mol, &mut v[FeatureLayout::descriptors()]);
        self.toxpatterns.match_into(mol, &mut v[FeatureLayout::toxpatterns()]);
        FeatureVector(v)
    }
}

/// [`Featurizer::assemble`] with the shipped definitions.
pub fn assemble(mol: &Molecule) -> FeatureVector {
    Featurizer::standard().assemble(mol)
}

/// Parses and featurizes each SMILES with the shipped definitions, spread over
/// the available cores. Output order follows the input.
pub fn featurize_smiles<S: AsRef<str> + Sync>(smiles: &[S]) -> Vec<Result<FeatureVector, ParseError>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(smiles.len().max(1));
    let chunk = smiles.len().div_ceil(threads).max(1);
    let featurizer = Featurizer::standard();
    std::thread::scope(|scope| {
        let handles: Vec<_> = smiles
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter().map(|s| parse_smiles(s.as_ref()).map(|m| featurizer.assemble(&m))).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("featurization worker panicked")).collect()
    })
}

/// Output block of one pattern set.
pub fn match_patterns(mol: &Molecule, set: &PatternSet) -> Vec<f64> {
    set.match_molecule(mol)
}

/// Descriptor block with the shipped definitions.
pub fn descriptors(mol: &Molecule) -> Vec<f64> {
    Featurizer::standard().descriptors.compute(mol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn layout_blocks_tile_the_vector() {
        assert_eq!(FeatureLayout::ecfp().end, FeatureLayout::keys().start);
        assert_eq!(FeatureLayout::keys().end, FeatureLayout::descriptors().start);
        assert_eq!(FeatureLayout::descriptors().end, FeatureLayout::toxpatterns().start);
        assert_eq!(FeatureLayout::toxpatterns().end, 9385);
        assert_eq!(FeatureLayout::keys(), 8192..8358);
    }

    #[test]
    fn shipped_definitions_load() {
        let f = Featurizer::standard();
        assert!(f.keys.entries.len() <= 166);
        assert!(f.toxpatterns.entries.len() <= 827);
        assert_eq!(f.descriptors.names.len(), 200);
    }

    #[test]
    fn assemble_is_order_invariant() {
        let a = assemble(&parse_smiles("CCO").unwrap());
        let b = assemble(&parse_smiles("OCC").unwrap());
        assert_eq!(a.len(), 9385);
        assert_eq!(a, b);
    }

    #[test]
    fn no_keys_means_zero_block() {
        let v = assemble(&parse_smiles("[He]").unwrap());
        assert!(v[FeatureLayout::keys()].iter().all(|&x| x == 0.0));
    }
}
