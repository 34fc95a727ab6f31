use super::Molecule;

/// Per-atom and per-bond ring flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingFlags {
    pub atoms: Vec<bool>,
    pub bonds: Vec<bool>,
}

/// Flags every atom and bond lying on at least one simple cycle.
///
/// A bond is on a cycle iff it is not a bridge; an atom is on a cycle iff one
/// of its bonds is. Bridges come from an iterative low-link DFS per component.
pub fn ring_membership(mol: &Molecule) -> RingFlags {
    let n = mol.atom_count();
    let mut bonds = vec![true; mol.bonds().len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;

    // (atom, bond used to enter it, next neighbour index)
    let mut stack: Vec<(usize, Option<usize>, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, None, 0));
        while let Some(&mut (u, parent_bond, ref mut next)) = stack.last_mut() {
            let neighbors = mol.neighbors(u);
            if *next < neighbors.len() {
                let nb = neighbors[*next];
                *next += 1;
                if Some(nb.bond) == parent_bond {
                    continue;
                }
                if disc[nb.atom] == usize::MAX {
                    disc[nb.atom] = timer;
                    low[nb.atom] = timer;
                    timer += 1;
                    stack.push((nb.atom, Some(nb.bond), 0));
                } else {
                    low[u] = low[u].min(disc[nb.atom]);
                }
            } else {
                stack.pop();
                if let (Some(bond), Some(&(p, _, _))) = (parent_bond, stack.last()) {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        bonds[bond] = false;
                    }
                }
            }
        }
    }

    let mut atoms = vec![false; n];
    for (i, bond) in mol.bonds().iter().enumerate() {
        if bonds[i] {
            atoms[bond.a] = true;
            atoms[bond.b] = true;
        }
    }
    RingFlags { atoms, bonds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn flags(s: &str) -> RingFlags {
        ring_membership(&parse_smiles(s).unwrap())
    }

    #[test]
    fn cyclopropane() {
        let f = flags("C1CC1");
        assert_eq!(f.atoms, [true; 3]);
        assert_eq!(f.bonds, [true; 3]);
    }

    #[test]
    fn acyclic() {
        let f = flags("CCO");
        assert!(f.atoms.iter().chain(&f.bonds).all(|x| !x));
    }

    #[test]
    fn methyl_substituent() {
        let f = flags("C1CC1C");
        assert_eq!(f.atoms, [true, true, true, false]);
        assert_eq!(f.atoms.iter().filter(|x| **x).count(), 3);
        let m = parse_smiles("C1CC1C").unwrap();
        let exo = m.bond_between(2, 3).unwrap();
        assert!(!f.bonds[exo]);
        assert_eq!(f.bonds.iter().filter(|x| **x).count(), 3);
    }

    #[test]
    fn linked_rings_keep_linker_out() {
        let m = parse_smiles("C1CC1CC1CC1").unwrap();
        let f = ring_membership(&m);
        assert!(!f.atoms[3]);
        assert_eq!(f.bonds.iter().filter(|x| !**x).count(), 2);
        assert_eq!(m.ring_count(), 2);
    }

    #[test]
    fn long_chain_does_not_recurse() {
        let s = "C".repeat(20_000);
        let f = flags(&s);
        assert!(f.atoms.iter().all(|x| !x));
    }
}
