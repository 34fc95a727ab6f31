//! Molecular graphs parsed from SMILES.
//!
//! The parser covers the organic subset, bracket atoms (isotope, chirality,
//! hydrogen count, charge, atom class), branches, ring closures including the
//! `%nn` form, dot-disconnected components and lowercase aromatic notation.
//! Aromaticity is taken as written; there is no kekulization or perception.
//! Stereo marks are recorded on atoms and bonds and ignored elsewhere.

pub mod element;
mod invariants;
mod parser;
mod ring;
pub mod substructure;
pub mod writer;

use std::fmt;

pub use element::Element;
pub use invariants::initial_atom_invariants;
pub use parser::parse_smiles;
pub use ring::{ring_membership, RingFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to an atom's valence; aromatic bonds count one,
    /// the extra pi electron is accounted for separately.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable code used when hashing environments.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

/// Directional single-bond mark (`/` or `\`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Chirality {
    /// `@`
    CounterClockwise,
    /// `@@`
    Clockwise,
    /// Extended classes such as `@TH1` or `@OH12`, kept verbatim.
    Class(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: &'static Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogens written inside a bracket atom.
    pub explicit_h: u8,
    /// Hydrogens implied by the default valence table; always 0 for bracket atoms.
    pub implicit_h: u8,
    pub in_ring: bool,
    /// Number of neighbours that are not hydrogen.
    pub degree: u8,
    pub isotope: Option<u16>,
    pub chirality: Option<Chirality>,
    pub bracket: bool,
    /// Byte offset of the atom in the source text.
    pub position: usize,
}

impl Atom {
    pub fn symbol(&self) -> &'static str {
        self.element.symbol
    }

    pub fn atomic_number(&self) -> u8 {
        self.element.atomic_number
    }

    pub fn is_hydrogen(&self) -> bool {
        self.element.atomic_number == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
    pub direction: Option<BondDirection>,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub atom: usize,
    pub bond: usize,
}

/// Parsed, validated molecular graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<Neighbor>>,
    source: String,
}

impl Molecule {
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, source: String) -> Self {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            adjacency[bond.a].push(Neighbor { atom: bond.b, bond: i });
            adjacency[bond.b].push(Neighbor { atom: bond.a, bond: i });
        }
        Molecule { atoms, bonds, adjacency, source }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, i: usize) -> &Bond {
        &self.bonds[i]
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| !a.is_hydrogen()).count()
    }

    pub fn neighbors(&self, atom: usize) -> &[Neighbor] {
        &self.adjacency[atom]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|n| n.atom == b).map(|n| n.bond)
    }

    /// Bracket hydrogens, implicit hydrogens and explicit `[H]` neighbours.
    pub fn total_h(&self, atom: usize) -> u32 {
        let a = &self.atoms[atom];
        let h_neighbors = self.adjacency[atom]
            .iter()
            .filter(|n| self.atoms[n.atom].is_hydrogen())
            .count() as u32;
        u32::from(a.explicit_h) + u32::from(a.implicit_h) + h_neighbors
    }

    /// Connected-component label per atom, numbered in order of first atom.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.atoms.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.atoms.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for n in &self.adjacency[u] {
                    if label[n.atom] == usize::MAX {
                        label[n.atom] = next;
                        stack.push(n.atom);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Independent cycle count (edges - vertices + components).
    pub fn ring_count(&self) -> usize {
        (self.bonds.len() + self.component_count()).saturating_sub(self.atoms.len())
    }

    /// Exact equality of labelled graphs (element, aromaticity, charge,
    /// isotope, hydrogen count, bond order), ignoring atom order and stereo.
    pub fn same_graph(&self, other: &Molecule) -> bool {
        substructure::is_isomorphic(self, other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorKind {
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
    BadCharge,
    ValenceViolation,
    EmptyInput,
    BadToken,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::UnbalancedParenthesis => "unbalanced_parenthesis",
            ParseErrorKind::UnclosedRingBond => "unclosed_ring_bond",
            ParseErrorKind::UnknownElement => "unknown_element",
            ParseErrorKind::BadCharge => "bad_charge",
            ParseErrorKind::ValenceViolation => "valence_violation",
            ParseErrorKind::EmptyInput => "empty_input",
            ParseErrorKind::BadToken => "bad_token",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} at byte {position}: {message}", kind.as_str())]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
