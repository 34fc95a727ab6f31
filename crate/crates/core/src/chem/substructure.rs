//! Backtracking subgraph embedding search.
//!
//! A [`QueryGraph`] supplies its own topology and atom/bond predicates; the
//! search enumerates injective atom maps into a target [`Molecule`] such that
//! every query bond lands on a target bond satisfying the bond predicate.
//! Embeddings are non-induced: extra target bonds between mapped atoms are
//! allowed.

use std::collections::HashSet;
use std::ops::ControlFlow;

use super::{Molecule, Neighbor};

pub trait QueryGraph {
    fn atom_count(&self) -> usize;
    fn bond_count(&self) -> usize;
    /// Neighbours of query atom `i` as (atom, bond) pairs.
    fn neighbors(&self, i: usize) -> &[Neighbor];
    fn atom_matches(&self, query_atom: usize, mol: &Molecule, target_atom: usize) -> bool;
    fn bond_matches(&self, query_bond: usize, mol: &Molecule, target_bond: usize) -> bool;
}

/// Visit order with, for every query atom after the first in its component,
/// an earlier-visited neighbour to grow from.
fn visit_order<Q: QueryGraph + ?Sized>(query: &Q) -> Vec<(usize, Option<usize>)> {
    let n = query.atom_count();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut head = order.len();
        order.push((root, None));
        while head < order.len() {
            let (u, _) = order[head];
            head += 1;
            for nb in query.neighbors(u) {
                if !seen[nb.atom] {
                    seen[nb.atom] = true;
                    order.push((nb.atom, Some(u)));
                }
            }
        }
    }
    order
}

struct Search<'a, Q: QueryGraph + ?Sized> {
    query: &'a Q,
    mol: &'a Molecule,
    order: Vec<(usize, Option<usize>)>,
    mapping: Vec<usize>,
    used: Vec<bool>,
}

impl<'a, Q: QueryGraph + ?Sized> Search<'a, Q> {
    fn feasible(&self, q: usize, t: usize) -> bool {
        if self.used[t] || !self.query.atom_matches(q, self.mol, t) {
            return false;
        }
        for nb in self.query.neighbors(q) {
            let image = self.mapping[nb.atom];
            if image == usize::MAX {
                continue;
            }
            match self.mol.bond_between(t, image) {
                Some(tb) if self.query.bond_matches(nb.bond, self.mol, tb) => {}
                _ => return false,
            }
        }
        true
    }

    fn extend<F>(&mut self, depth: usize, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize]) -> ControlFlow<()>,
    {
        if depth == self.order.len() {
            return visit(&self.mapping);
        }
        let (q, anchor) = self.order[depth];
        let candidates: Vec<usize> = match anchor {
            Some(a) => self.mol.neighbors(self.mapping[a]).iter().map(|n| n.atom).collect(),
            None => (0..self.mol.atom_count()).collect(),
        };
        for t in candidates {
            if !self.feasible(q, t) {
                continue;
            }
            self.mapping[q] = t;
            self.used[t] = true;
            let flow = self.extend(depth + 1, visit);
            self.mapping[q] = usize::MAX;
            self.used[t] = false;
            flow?;
        }
        ControlFlow::Continue(())
    }
}

/// Calls `visit` with every embedding (query atom -> target atom); stop early
/// by returning `ControlFlow::Break`.
pub fn for_each_embedding<Q, F>(query: &Q, mol: &Molecule, mut visit: F)
where
    Q: QueryGraph + ?Sized,
    F: FnMut(&[usize]) -> ControlFlow<()>,
{
    if query.atom_count() == 0 || query.atom_count() > mol.atom_count() {
        return;
    }
    let mut search = Search {
        query,
        mol,
        order: visit_order(query),
        mapping: vec![usize::MAX; query.atom_count()],
        used: vec![false; mol.atom_count()],
    };
    let _ = search.extend(0, &mut visit);
}

/// Number of embeddings with distinct target atom sets.
pub fn count_unique_embeddings<Q: QueryGraph + ?Sized>(query: &Q, mol: &Molecule) -> usize {
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for_each_embedding(query, mol, |m| {
        let mut key = m.to_vec();
        key.sort_unstable();
        seen.insert(key);
        ControlFlow::Continue(())
    });
    seen.len()
}

pub fn has_embedding<Q: QueryGraph + ?Sized>(query: &Q, mol: &Molecule) -> bool {
    let mut found = false;
    for_each_embedding(query, mol, |_| {
        found = true;
        ControlFlow::Break(())
    });
    found
}

/// A molecule used as a query with exact-label predicates.
struct ExactQuery<'a>(&'a Molecule);

impl QueryGraph for ExactQuery<'_> {
    fn atom_count(&self) -> usize {
        self.0.atom_count()
    }

    fn bond_count(&self) -> usize {
        self.0.bonds().len()
    }

    fn neighbors(&self, i: usize) -> &[Neighbor] {
        self.0.neighbors(i)
    }

    fn atom_matches(&self, q: usize, mol: &Molecule, t: usize) -> bool {
        let (a, b) = (self.0.atom(q), mol.atom(t));
        a.element.atomic_number == b.element.atomic_number
            && a.aromatic == b.aromatic
            && a.formal_charge == b.formal_charge
            && a.isotope == b.isotope
            && self.0.total_h(q) == mol.total_h(t)
            && self.0.neighbors(q).len() == mol.neighbors(t).len()
    }

    fn bond_matches(&self, q: usize, mol: &Molecule, t: usize) -> bool {
        self.0.bond(q).order == mol.bond(t).order
    }
}

/// Labelled-graph isomorphism: an injective embedding between graphs with
/// equal atom and bond counts covers every bond, so it is a bijection.
pub fn is_isomorphic(a: &Molecule, b: &Molecule) -> bool {
    if a.atom_count() != b.atom_count() || a.bonds().len() != b.bonds().len() {
        return false;
    }
    let query = ExactQuery(a);
    debug_assert_eq!(query.bond_count(), b.bonds().len());
    has_embedding(&query, b)
}
