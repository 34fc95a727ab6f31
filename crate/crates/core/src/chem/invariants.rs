use super::Molecule;
use crate::hash::Fnv1a;

/// Seed identifiers for circular fingerprints: one FNV-1a hash per atom over
/// (atomic number, heavy degree, total H, formal charge, ring flag, aromatic flag).
/// Only graph properties enter, so writing order never matters.
pub fn initial_atom_invariants(mol: &Molecule) -> Vec<u64> {
    (0..mol.atom_count())
        .map(|i| {
            let atom = mol.atom(i);
            Fnv1a::new()
                .u8(atom.atomic_number())
                .u8(atom.degree)
                .u32(mol.total_h(i))
                .i8(atom.formal_charge)
                .u8(u8::from(atom.in_ring))
                .u8(u8::from(atom.aromatic))
                .finish()
        })
        .collect()
}
