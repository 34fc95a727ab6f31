//! Synthetic fixtures with pattern-driven labels.
//!
//! Molecules are assembled from a core ring or chain with up to three
//! substituents. Each endpoint is active iff the molecule contains one of its
//! rule patterns. Training labels can be flipped with a fixed probability;
//! held-out labels stay clean so that scores measure what the model learned
//! about the rules.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{endpoint_class_counts, Endpoint, LabelMatrix, LabelRow, ENDPOINT_COUNT};
use crate::chem::parse_smiles;
use crate::featurize::Pattern;

const CORES: [&str; 7] = [
    "c1c{}cc{}cc1{}",
    "c1c{}nc{}cc1{}",
    "C1C{}CC{}CC1{}",
    "CC{}CC{}CC{}",
    "c1cc2c{}cc{}cc2c{}c1",
    "O=C{}C{}CC{}",
    "c1c{}sc{}c1{}",
];

const SUBSTITUENTS: [&str; 18] = [
    "[N+](=O)[O-]",
    "N",
    "O",
    "Cl",
    "Br",
    "F",
    "C(F)(F)F",
    "C(=O)O",
    "C=O",
    "C#N",
    "S(=O)(=O)N",
    "OC",
    "C",
    "CC",
    "N=Nc1ccccc1",
    "c1ccccc1",
    "OP(=O)(O)O",
    "C1OC1",
];

/// Rule patterns per endpoint, in endpoint order; any match makes the
/// molecule active.
pub const RULES: [&[&str]; ENDPOINT_COUNT] = [
    &["[N+](=O)[O-]"],
    &["[Cl]"],
    &["c1ccc2ccccc2c1", "c-c"],
    &["C#N"],
    &["[OX2H]"],
    &["[Br]"],
    &["C(=O)[OH]"],
    &["[CX3H1]=O", "C1OC1"],
    &["N=N"],
    &["C(F)(F)F"],
    &["S(=O)(=O)N", "P(=O)(O)O"],
    &["[NX3;H2]"],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub molecules: usize,
    /// Share of molecules held out as the test split.
    pub test_fraction: f64,
    /// Probability that a cell is unmeasured.
    pub missing_rate: f64,
    /// Probability that a training label is flipped.
    pub flip_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { molecules: 500, test_fraction: 0.2, missing_rate: 0.3, flip_noise: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub train: LabelMatrix,
    pub test: LabelMatrix,
}

fn compiled_rules() -> Vec<Vec<Pattern>> {
    RULES
        .iter()
        .map(|ps| ps.iter().map(|p| Pattern::compile(p).expect("rule pattern compiles")).collect())
        .collect()
}

/// Clean rule labels of a SMILES string.
pub fn rule_labels(smiles: &str) -> [bool; ENDPOINT_COUNT] {
    let mol = parse_smiles(smiles).expect("generated SMILES parse");
    let rules = compiled_rules();
    let mut out = [false; ENDPOINT_COUNT];
    for (k, ps) in rules.iter().enumerate() {
        out[k] = ps.iter().any(|p| p.matches(&mol));
    }
    out
}

pub fn random_smiles<R: Rng + ?Sized>(rng: &mut R) -> String {
    let core = *CORES.choose(rng).expect("non-empty");
    let mut out = String::new();
    for (i, part) in core.split("{}").enumerate() {
        if i > 0 && rng.random_bool(0.75) {
            out.push('(');
            out.push_str(SUBSTITUENTS.choose(rng).expect("non-empty"));
            out.push(')');
        }
        out.push_str(part);
    }
    out
}

/// Deterministic train/test split. Draws are repeated with derived seeds
/// until every endpoint has both classes among the test labels.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticSplit {
    assert!(cfg.molecules >= 2, "need at least two molecules");
    let rules = compiled_rules();
    for attempt in 0u64.. {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let n_test = ((cfg.molecules as f64 * cfg.test_fraction).round() as usize).clamp(1, cfg.molecules - 1);
        let n_train = cfg.molecules - n_test;
        let mut build = |n: usize, prefix: &str, noise: f64| {
            let mut ids = Vec::with_capacity(n);
            let mut smiles = Vec::with_capacity(n);
            let mut rows: Vec<LabelRow> = Vec::with_capacity(n);
            for i in 0..n {
                let smi = random_smiles(&mut rng);
                let mol = parse_smiles(&smi).expect("generated SMILES parse");
                let mut row = [None; ENDPOINT_COUNT];
                for (k, ps) in rules.iter().enumerate() {
                    let truth = ps.iter().any(|p| p.matches(&mol));
                    let missing = rng.random_bool(cfg.missing_rate);
                    let flip = rng.random_bool(noise);
                    if !missing {
                        row[k] = Some(truth ^ flip);
                    }
                }
                ids.push(format!("{prefix}{i:05}"));
                smiles.push(smi);
                rows.push(row);
            }
            LabelMatrix::new(ids, smiles, rows).expect("generated ids are unique")
        };
        let train = build(n_train, "train-", cfg.flip_noise);
        let test = build(n_test, "test-", 0.0);
        let ok = |m: &LabelMatrix| {
            Endpoint::ALL.iter().all(|&e| {
                let (p, n, _) = endpoint_class_counts(m, e);
                p > 0 && n > 0
            })
        };
        if ok(&test) && ok(&train) {
            return SyntheticSplit { train, test };
        }
    }
    unreachable!("the attempt loop only exits by returning")
}
