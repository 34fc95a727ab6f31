//! Folded circular (Morgan-style) count fingerprints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{initial_atom_invariants, Molecule};
use crate::hash::Fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub radius: u32,
    pub width: usize,
    pub counted: bool,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig { radius: 3, width: 8192, counted: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintConfigError {
    #[error("fingerprint width must be at least 1")]
    ZeroWidth,
    #[error("fingerprint radius {0} exceeds the maximum of 10")]
    RadiusTooLarge(u32),
}

impl FingerprintConfig {
    pub const MAX_RADIUS: u32 = 10;

    pub fn new(radius: u32, width: usize, counted: bool) -> Result<Self, FingerprintConfigError> {
        let cfg = FingerprintConfig { radius, width, counted };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FingerprintConfigError> {
        if self.width == 0 {
            return Err(FingerprintConfigError::ZeroWidth);
        }
        if self.radius > Self::MAX_RADIUS {
            return Err(FingerprintConfigError::RadiusTooLarge(self.radius));
        }
        Ok(())
    }
}

/// One retained circular environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Environment {
    pub center: usize,
    pub radius: u32,
    pub identifier: u64,
}

/// Environments after deduplication. An atom's environment at radius `r` is
/// kept only if its atom set grew relative to radius `r - 1`; once the ball
/// around an atom covers its component, larger radii add nothing.
pub fn environments(mol: &Molecule, radius: u32) -> Vec<Environment> {
    let n = mol.atom_count();
    let mut ids = initial_atom_invariants(mol);
    let mut out: Vec<Environment> =
        ids.iter().enumerate().map(|(center, &identifier)| Environment { center, radius: 0, identifier }).collect();

    // ball membership per center, plus the current frontier
    let mut in_ball: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            let mut v = vec![false; n];
            v[i] = true;
            v
        })
        .collect();
    let mut frontier: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    let mut nbr_buf: Vec<(u8, u64)> = Vec::new();
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                nbr_buf.clear();
                nbr_buf.extend(mol.neighbors(i).iter().map(|nb| (mol.bond(nb.bond).order.code(), ids[nb.atom])));
                nbr_buf.sort_unstable();
                let mut h = Fnv1a::new().u32(r).u64(ids[i]).u32(nbr_buf.len() as u32);
                for &(code, id) in &nbr_buf {
                    h = h.u8(code).u64(id);
                }
                h.finish()
            })
            .collect();
        for center in 0..n {
            if frontier[center].is_empty() {
                continue;
            }
            let mut grown = Vec::new();
            for &u in &frontier[center] {
                for nb in mol.neighbors(u) {
                    if !in_ball[center][nb.atom] {
                        in_ball[center][nb.atom] = true;
                        grown.push(nb.atom);
                    }
                }
            }
            if !grown.is_empty() {
                out.push(Environment { center, radius: r, identifier: next[center] });
            }
            frontier[center] = grown;
        }
        ids = next;
    }
    out
}

/// Folded fingerprint of length `cfg.width`: each retained environment
/// increments bucket `identifier mod width` (or sets it to 1 when not counted).
pub fn ecfp_counts(mol: &Molecule, cfg: &FingerprintConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.width];
    ecfp_into(mol, cfg, &mut out);
    out
}

pub fn ecfp_into(mol: &Molecule, cfg: &FingerprintConfig, out: &mut [f64]) {
    assert_eq!(out.len(), cfg.width);
    out.fill(0.0);
    for env in environments(mol, cfg.radius) {
        let bucket = (env.identifier % cfg.width as u64) as usize;
        if cfg.counted {
            out[bucket] += 1.0;
        } else {
            out[bucket] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn fp(s: &str) -> Vec<f64> {
        ecfp_counts(&parse_smiles(s).unwrap(), &FingerprintConfig::default())
    }

    #[test]
    fn methane_has_one_environment() {
        let v = fp("C");
        let nonzero: Vec<f64> = v.iter().copied().filter(|&x| x != 0.0).collect();
        assert_eq!(nonzero, vec![1.0]);
    }

    #[test]
    fn benzene_has_four_identifiers_of_six() {
        let m = parse_smiles("c1ccccc1").unwrap();
        let envs = environments(&m, 3);
        assert_eq!(envs.len(), 24);
        let mut ids: Vec<u64> = envs.iter().map(|e| e.identifier).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 4);
        let mut counts: Vec<f64> = fp("c1ccccc1").into_iter().filter(|&x| x != 0.0).collect();
        counts.sort_by(f64::total_cmp);
        assert_eq!(counts, vec![6.0; 4]);
    }

    #[test]
    fn writing_order_does_not_matter() {
        assert_eq!(fp("CCO"), fp("OCC"));
        assert_eq!(fp("CC(=O)Oc1ccccc1C(=O)O"), fp("OC(=O)c1ccccc1OC(C)=O"));
    }

    #[test]
    fn growth_stops_at_component_boundary() {
        // ethanol: center C1 covers everything at r=1, the terminal atoms at r=2
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(environments(&m, 3).len(), 3 + 3 + 2);
    }

    #[test]
    fn config_bounds() {
        assert!(FingerprintConfig::new(3, 0, true).is_err());
        assert!(FingerprintConfig::new(11, 8, true).is_err());
        assert!(FingerprintConfig::new(10, 1, false).is_ok());
    }
}
