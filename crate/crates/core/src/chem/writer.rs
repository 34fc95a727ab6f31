//! SMILES rendering from an arbitrary start atom.
//!
//! Output is not canonical. Varying the root and the neighbour order yields
//! alternative writings of the same graph, which is what the writing-order
//! invariance tests need. Chirality and bond direction marks are dropped.

use std::fmt::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{Atom, BondOrder, Molecule, Neighbor};

/// Renders `mol` starting at `root`, visiting neighbours in bond order.
pub fn write_smiles(mol: &Molecule, root: usize) -> String {
    render::<rand_chacha::ChaCha8Rng>(mol, root, None)
}

/// Renders `mol` starting at `root` with neighbour visiting order and the
/// order of disconnected components shuffled by `rng`.
pub fn write_smiles_shuffled<R: Rng + ?Sized>(mol: &Molecule, root: usize, rng: &mut R) -> String {
    render(mol, root, Some(rng))
}

fn render<R: Rng + ?Sized>(mol: &Molecule, root: usize, mut rng: Option<&mut R>) -> String {
    assert!(root < mol.atom_count(), "root atom out of range");
    let n = mol.atom_count();
    let labels = mol.components();

    let mut starts: Vec<usize> = Vec::new();
    let mut seen_component = vec![false; labels.iter().max().map_or(0, |m| m + 1)];
    seen_component[labels[root]] = true;
    for i in 0..n {
        if !seen_component[labels[i]] {
            seen_component[labels[i]] = true;
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == labels[i]).collect();
            let pick = match rng.as_deref_mut() {
                Some(r) => *members.choose(r).expect("component is non-empty"),
                None => i,
            };
            starts.push(pick);
        }
    }
    if let Some(r) = rng.as_deref_mut() {
        starts.shuffle(r);
    }
    starts.insert(0, root);

    let mut tree = Tree {
        children: vec![Vec::new(); n],
        rings: vec![Vec::new(); n],
    };
    let mut visited = vec![false; n];
    let mut bond_done = vec![false; mol.bonds().len()];
    for &start in &starts {
        build_tree(mol, start, &mut tree, &mut visited, &mut bond_done, rng.as_deref_mut());
    }

    let mut out = String::new();
    let mut emitter = Emitter { mol, tree: &tree, open: Vec::new(), labels: vec![None; mol.bonds().len()] };
    for (i, &start) in starts.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        emitter.emit(start, &mut out);
    }
    out
}

#[derive(Clone, Copy)]
enum RingEnd {
    Open(usize),
    Close(usize),
}

struct Tree {
    children: Vec<Vec<Neighbor>>,
    rings: Vec<Vec<RingEnd>>,
}

fn build_tree<R: Rng + ?Sized>(
    mol: &Molecule,
    root: usize,
    tree: &mut Tree,
    visited: &mut [bool],
    bond_done: &mut [bool],
    mut rng: Option<&mut R>,
) {
    let ordered = |u: usize, rng: &mut Option<&mut R>| {
        let mut nbs = mol.neighbors(u).to_vec();
        if let Some(r) = rng.as_deref_mut() {
            nbs.shuffle(r);
        }
        nbs
    };
    visited[root] = true;
    let mut stack = vec![(root, ordered(root, &mut rng), 0usize)];
    while let Some((u, nbs, idx)) = stack.last_mut() {
        let u = *u;
        if *idx == nbs.len() {
            stack.pop();
            continue;
        }
        let nb = nbs[*idx];
        *idx += 1;
        if bond_done[nb.bond] {
            continue;
        }
        bond_done[nb.bond] = true;
        if visited[nb.atom] {
            // back edge: the ancestor opens the ring, this atom closes it
            tree.rings[nb.atom].push(RingEnd::Open(nb.bond));
            tree.rings[u].push(RingEnd::Close(nb.bond));
        } else {
            visited[nb.atom] = true;
            tree.children[u].push(nb);
            let next = ordered(nb.atom, &mut rng);
            stack.push((nb.atom, next, 0));
        }
    }
}

struct Emitter<'a> {
    mol: &'a Molecule,
    tree: &'a Tree,
    open: Vec<bool>,
    labels: Vec<Option<usize>>,
}

impl Emitter<'_> {
    fn allocate(&mut self) -> usize {
        match self.open.iter().position(|used| !used) {
            Some(i) => {
                self.open[i] = true;
                i + 1
            }
            None => {
                self.open.push(true);
                self.open.len()
            }
        }
    }

    fn emit(&mut self, start: usize, out: &mut String) {
        let mut u = start;
        loop {
            write_atom(self.mol.atom(u), out);
            // closings first so their labels can be reused by openings
            let ends = &self.tree.rings[u];
            for end in ends.iter().filter(|e| matches!(e, RingEnd::Close(_))) {
                if let RingEnd::Close(bond) = *end {
                    let label = self.labels[bond].expect("ring opened before it closes");
                    self.open[label - 1] = false;
                    write_label(label, out);
                }
            }
            for end in ends.iter().filter(|e| matches!(e, RingEnd::Open(_))) {
                if let RingEnd::Open(bond) = *end {
                    let label = self.allocate();
                    self.labels[bond] = Some(label);
                    out.push_str(bond_symbol(self.mol, bond));
                    write_label(label, out);
                }
            }
            let children = &self.tree.children[u];
            let Some((last, rest)) = children.split_last() else {
                return;
            };
            for child in rest {
                out.push('(');
                out.push_str(bond_symbol(self.mol, child.bond));
                self.emit(child.atom, out);
                out.push(')');
            }
            out.push_str(bond_symbol(self.mol, last.bond));
            u = last.atom;
        }
    }
}

fn write_label(label: usize, out: &mut String) {
    assert!(label < 100, "more than 99 simultaneously open rings");
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label}");
    }
}

fn bond_symbol(mol: &Molecule, bond: usize) -> &'static str {
    let b = mol.bond(bond);
    match b.order {
        BondOrder::Single if mol.atom(b.a).aromatic && mol.atom(b.b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn write_atom(atom: &Atom, out: &mut String) {
    let symbol = if atom.aromatic {
        atom.symbol().to_ascii_lowercase()
    } else {
        atom.symbol().to_string()
    };
    if !atom.bracket {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match atom.explicit_h {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -i16::from(c));
        }
    }
    out.push(']');
}
