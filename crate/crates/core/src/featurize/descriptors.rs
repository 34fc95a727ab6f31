//! Graph-computable molecular descriptors.
//!
//! The ordered name list lives in a versioned data file; each name maps to a
//! computation below. Names of the form `reserved_NNN` are padding and always
//! evaluate to 0. Topological indices are computed on the hydrogen-suppressed
//! graph.

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

use crate::chem::{parse_smiles, BondOrder, Molecule};
use crate::hash::sha256_hex;

/// Floating-point sums in a fixed value order, so results do not depend on
/// atom numbering.
trait SortedSum: Iterator<Item = f64> + Sized {
    fn sorted_sum(self) -> f64 {
        let mut values: Vec<f64> = self.collect();
        values.sort_by(f64::total_cmp);
        values.into_iter().sum()
    }
}

impl<I: Iterator<Item = f64>> SortedSum for I {}

#[derive(Debug, Error)]
pub enum DescriptorSetError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("descriptor list defines {found} entries, expected {expected}")]
    Length { found: usize, expected: usize },
}

#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub version: String,
    pub names: Vec<String>,
    pub content_hash: String,
}

impl DescriptorSet {
    /// Parses `index<TAB>name` lines; indices must run 0..len in order.
    pub fn parse(text: &str, expected: usize) -> Result<DescriptorSet, DescriptorSetError> {
        let probe = parse_smiles("C").expect("probe molecule parses");
        let probe_ctx = Context::new(&probe);
        let mut names = Vec::new();
        let mut version = String::from("unversioned");
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let fmt = |message: String| DescriptorSetError::Format { line: line_no, message };
            let (idx, name) = trimmed.split_once('\t').ok_or_else(|| fmt("expected index<TAB>name".into()))?;
            let index: usize = idx.parse().map_err(|_| fmt(format!("bad index {idx:?}")))?;
            if index != names.len() {
                return Err(fmt(format!("index {index} out of sequence")));
            }
            let name = name.trim();
            if probe_ctx.value(name).is_none() {
                return Err(fmt(format!("unknown descriptor {name:?}")));
            }
            if !seen.insert(name.to_string()) {
                return Err(fmt(format!("duplicate descriptor {name:?}")));
            }
            names.push(name.to_string());
        }
        if names.len() != expected {
            return Err(DescriptorSetError::Length { found: names.len(), expected });
        }
        Ok(DescriptorSet { version, names, content_hash: sha256_hex(text.as_bytes()) })
    }

    pub fn compute(&self, mol: &Molecule) -> Vec<f64> {
        let mut out = vec![0.0; self.names.len()];
        self.compute_into(mol, &mut out);
        out
    }

    pub fn compute_into(&self, mol: &Molecule, out: &mut [f64]) {
        assert_eq!(out.len(), self.names.len());
        let ctx = Context::new(mol);
        for (slot, name) in out.iter_mut().zip(&self.names) {
            let v = ctx.value(name).expect("names validated at load");
            *slot = if v.is_finite() { v } else { 0.0 };
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

const HALOGENS: [u8; 4] = [9, 17, 35, 53];
const H_MASS: f64 = 1.008;

/// Per-molecule precomputation shared by all descriptors.
struct Context<'a> {
    mol: &'a Molecule,
    /// Heavy atom indices into the molecule.
    heavy: Vec<usize>,
    /// Adjacency among heavy atoms, in positions of `heavy`.
    adj: Vec<Vec<usize>>,
    /// Heavy-heavy bonds as (molecule bond index, heavy position a, heavy position b).
    heavy_bonds: Vec<(usize, usize, usize)>,
    /// All-pairs shortest paths on the heavy graph; `u32::MAX` when disconnected.
    dist: Vec<Vec<u32>>,
    component: Vec<usize>,
    hydrogens: f64,
    mass: f64,
}

impl<'a> Context<'a> {
    fn new(mol: &'a Molecule) -> Self {
        let mut pos = vec![usize::MAX; mol.atom_count()];
        let heavy: Vec<usize> = (0..mol.atom_count()).filter(|&i| !mol.atom(i).is_hydrogen()).collect();
        for (p, &i) in heavy.iter().enumerate() {
            pos[i] = p;
        }
        let mut adj = vec![Vec::new(); heavy.len()];
        let mut heavy_bonds = Vec::new();
        for (bi, b) in mol.bonds().iter().enumerate() {
            let (pa, pb) = (pos[b.a], pos[b.b]);
            if pa != usize::MAX && pb != usize::MAX {
                adj[pa].push(pb);
                adj[pb].push(pa);
                heavy_bonds.push((bi, pa, pb));
            }
        }
        let n = heavy.len();
        let mut dist = vec![vec![u32::MAX; n]; n];
        let mut queue = VecDeque::new();
        for (s, row) in dist.iter_mut().enumerate() {
            row[s] = 0;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if row[v] == u32::MAX {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        let mut component = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if component[s] == usize::MAX {
                for t in 0..n {
                    if dist[s][t] != u32::MAX {
                        component[t] = next;
                    }
                }
                next += 1;
            }
        }
        let hydrogens: u32 = mol
            .atoms()
            .iter()
            .map(|a| u32::from(a.explicit_h) + u32::from(a.implicit_h) + u32::from(a.is_hydrogen()))
            .sum();
        let mass = mol
            .atoms()
            .iter()
            .map(|a| {
                let own = if a.is_hydrogen() { 0.0 } else { a.element.mass };
                own + f64::from(u32::from(a.explicit_h) + u32::from(a.implicit_h)) * H_MASS
            })
            .sorted_sum()
            + mol.atoms().iter().filter(|a| a.is_hydrogen()).count() as f64 * H_MASS;
        Context { mol, heavy, adj, heavy_bonds, dist, component, hydrogens: f64::from(hydrogens), mass }
    }

    fn n(&self) -> f64 {
        self.heavy.len() as f64
    }

    fn count_atoms(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.heavy.iter().filter(|&&i| pred(i)).count() as f64
    }

    fn count_z(&self, z: u8) -> f64 {
        self.count_atoms(|i| self.mol.atom(i).atomic_number() == z)
    }

    fn count_bonds(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.heavy_bonds.iter().filter(|&&(b, _, _)| pred(b)).count() as f64
    }

    fn z(&self, i: usize) -> u8 {
        self.mol.atom(i).atomic_number()
    }

    fn hdeg(&self, p: usize) -> f64 {
        self.adj[p].len() as f64
    }

    fn bond_pair(&self, b: usize) -> (u8, u8) {
        let bond = self.mol.bond(b);
        (self.z(bond.a), self.z(bond.b))
    }

    fn mass_fraction(&self, zs: &[u8]) -> f64 {
        let m: f64 = self
            .heavy
            .iter()
            .filter(|&&i| zs.contains(&self.z(i)))
            .map(|&i| self.mol.atom(i).element.mass)
            .sorted_sum();
        ratio(m, self.mass)
    }

    fn carbon_hybrid(&self, i: usize) -> Option<u8> {
        let atom = self.mol.atom(i);
        if atom.atomic_number() != 6 {
            return None;
        }
        let orders: Vec<BondOrder> = self.mol.neighbors(i).iter().map(|nb| self.mol.bond(nb.bond).order).collect();
        let doubles = orders.iter().filter(|&&o| o == BondOrder::Double).count();
        if orders.contains(&BondOrder::Triple) || doubles >= 2 {
            Some(1)
        } else if atom.aromatic || doubles == 1 || orders.contains(&BondOrder::Aromatic) {
            Some(2)
        } else {
            Some(3)
        }
    }

    fn connected_pairs(&self) -> impl Iterator<Item = u32> + '_ {
        let n = self.heavy.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| self.dist[i][j])).filter(|&d| d != u32::MAX)
    }

    fn eccentricity(&self, p: usize) -> u32 {
        self.dist[p].iter().copied().filter(|&d| d != u32::MAX).max().unwrap_or(0)
    }

    /// (component label, heavy atom count) of the largest component.
    fn largest_component(&self) -> (usize, usize) {
        let mut sizes = vec![0usize; self.component.iter().max().map_or(0, |m| m + 1)];
        for &c in &self.component {
            sizes[c] += 1;
        }
        let mut best = (0, 0);
        for (c, &s) in sizes.iter().enumerate() {
            if s > best.1 {
                best = (c, s);
            }
        }
        best
    }

    fn path_count(&self, len: usize) -> f64 {
        fn walk(adj: &[Vec<usize>], u: usize, left: usize, on_path: &mut [bool]) -> u64 {
            if left == 0 {
                return 1;
            }
            let mut total = 0;
            for &v in &adj[u] {
                if !on_path[v] {
                    on_path[v] = true;
                    total += walk(adj, v, left - 1, on_path);
                    on_path[v] = false;
                }
            }
            total
        }
        let mut on_path = vec![false; self.heavy.len()];
        let mut total = 0u64;
        for s in 0..self.heavy.len() {
            on_path[s] = true;
            total += walk(&self.adj, s, len, &mut on_path);
            on_path[s] = false;
        }
        // each path is found once from each end
        (total / 2) as f64
    }

    fn chi2(&self) -> f64 {
        let mut terms = Vec::new();
        for (c, nbrs) in self.adj.iter().enumerate() {
            for (x, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[x + 1..] {
                    terms.push(1.0 / (self.hdeg(a) * self.hdeg(c) * self.hdeg(b)).sqrt());
                }
            }
        }
        terms.into_iter().sorted_sum()
    }

    fn kappa(&self, order: u32) -> f64 {
        let a = self.n();
        let p = match order {
            1 => self.heavy_bonds.len() as f64,
            2 => self.path_count(2),
            _ => self.path_count(3),
        };
        if p == 0.0 {
            return 0.0;
        }
        match order {
            1 => a * (a - 1.0).powi(2) / (p * p),
            2 => (a - 1.0) * (a - 2.0).powi(2) / (p * p),
            _ if self.heavy.len() % 2 == 1 => (a - 1.0) * (a - 3.0).powi(2) / (p * p),
            _ => (a - 3.0) * (a - 2.0).powi(2) / (p * p),
        }
    }

    fn balaban_j(&self) -> f64 {
        let m = self.heavy_bonds.len() as f64;
        let components = self.component.iter().max().map_or(0, |c| c + 1) as f64;
        let mu = m - self.n() + components;
        let dsum: Vec<f64> = self
            .dist
            .iter()
            .map(|row| row.iter().filter(|&&d| d != u32::MAX).map(|&d| f64::from(d)).sorted_sum())
            .collect();
        let s: f64 = self
            .heavy_bonds
            .iter()
            .filter(|&&(_, a, b)| dsum[a] > 0.0 && dsum[b] > 0.0)
            .map(|&(_, a, b)| 1.0 / (dsum[a] * dsum[b]).sqrt())
            .sorted_sum();
        if m == 0.0 {
            0.0
        } else {
            m / (mu + 1.0) * s
        }
    }

    fn value(&self, name: &str) -> Option<f64> {
        let mol = self.mol;
        let atom = |i: usize| mol.atom(i);
        let carbons = self.count_z(6);
        let halogens = self.count_atoms(|i| HALOGENS.contains(&self.z(i)));
        let hetero = self.count_atoms(|i| self.z(i) != 6);
        let n = self.n();
        let v = match name {
            "mol_weight" => self.mass,
            "heavy_atom_mass" => self.heavy.iter().map(|&i| atom(i).element.mass).sorted_sum(),
            "heavy_atom_count" => n,
            "atom_count_with_h" => n + self.hydrogens,
            "hydrogen_count" => self.hydrogens,
            "count_C" => carbons,
            "count_N" => self.count_z(7),
            "count_O" => self.count_z(8),
            "count_S" => self.count_z(16),
            "count_P" => self.count_z(15),
            "count_F" => self.count_z(9),
            "count_Cl" => self.count_z(17),
            "count_Br" => self.count_z(35),
            "count_I" => self.count_z(53),
            "count_B" => self.count_z(5),
            "count_Si" => self.count_z(14),
            "count_Se" => self.count_z(34),
            "count_other_elements" => {
                self.count_atoms(|i| ![5, 6, 7, 8, 9, 14, 15, 16, 17, 34, 35, 53].contains(&self.z(i)))
            }
            "halogen_count" => halogens,
            "heteroatom_count" => hetero,
            "fraction_heteroatoms" => ratio(hetero, n),
            "fraction_carbon" => ratio(carbons, n),
            "bond_count" => self.heavy_bonds.len() as f64,
            "single_bond_count" => self.count_bonds(|b| mol.bond(b).order == BondOrder::Single),
            "double_bond_count" => self.count_bonds(|b| mol.bond(b).order == BondOrder::Double),
            "triple_bond_count" => self.count_bonds(|b| mol.bond(b).order == BondOrder::Triple),
            "aromatic_bond_count" => self.count_bonds(|b| mol.bond(b).order == BondOrder::Aromatic),
            "ring_bond_count" => self.count_bonds(|b| mol.bond(b).in_ring),
            "rotatable_bond_count" => self.rotatable(),
            "fraction_rotatable_bonds" => ratio(self.rotatable(), self.heavy_bonds.len() as f64),
            "ring_count" => mol.ring_count() as f64,
            "ring_atom_count" => self.count_atoms(|i| atom(i).in_ring),
            "fraction_ring_atoms" => ratio(self.count_atoms(|i| atom(i).in_ring), n),
            "aromatic_atom_count" => self.count_atoms(|i| atom(i).aromatic),
            "fraction_aromatic_atoms" => ratio(self.count_atoms(|i| atom(i).aromatic), n),
            "aromatic_heteroatom_count" => self.count_atoms(|i| atom(i).aromatic && self.z(i) != 6),
            "aromatic_carbon_count" => self.count_atoms(|i| atom(i).aromatic && self.z(i) == 6),
            "component_count" => mol.component_count() as f64,
            "largest_component_heavy_atoms" => self.largest_component().1 as f64,
            "fraction_csp3" => ratio(self.count_atoms(|i| self.carbon_hybrid(i) == Some(3)), carbons),
            "sp3_carbon_count" => self.count_atoms(|i| self.carbon_hybrid(i) == Some(3)),
            "sp2_carbon_count" => self.count_atoms(|i| self.carbon_hybrid(i) == Some(2)),
            "sp_carbon_count" => self.count_atoms(|i| self.carbon_hybrid(i) == Some(1)),
            "hbond_donor_count" => self.count_atoms(|i| matches!(self.z(i), 7 | 8) && mol.total_h(i) > 0),
            "hbond_acceptor_count" => self.count_atoms(|i| {
                let a = atom(i);
                match self.z(i) {
                    8 => a.formal_charge <= 0,
                    7 => a.formal_charge <= 0 && !(a.aromatic && mol.total_h(i) > 0),
                    _ => false,
                }
            }),
            "lipinski_donors" => self
                .heavy
                .iter()
                .filter(|&&i| matches!(self.z(i), 7 | 8))
                .map(|&i| f64::from(mol.total_h(i)))
                .sorted_sum(),
            "lipinski_acceptors" => self.count_atoms(|i| matches!(self.z(i), 7 | 8)),
            "positive_atom_count" => self.count_atoms(|i| atom(i).formal_charge > 0),
            "negative_atom_count" => self.count_atoms(|i| atom(i).formal_charge < 0),
            "net_charge" => mol.atoms().iter().map(|a| f64::from(a.formal_charge)).sorted_sum(),
            "abs_charge_sum" => mol.atoms().iter().map(|a| f64::from(a.formal_charge).abs()).sorted_sum(),
            "isotope_atom_count" => mol.atoms().iter().filter(|a| a.isotope.is_some()).count() as f64,
            "stereo_center_marks" => mol.atoms().iter().filter(|a| a.chirality.is_some()).count() as f64,
            "directional_bond_marks" => mol.bonds().iter().filter(|b| b.direction.is_some()).count() as f64,
            "degree_0_count" => self.count_atoms(|i| atom(i).degree == 0),
            "degree_1_count" => self.count_atoms(|i| atom(i).degree == 1),
            "degree_2_count" => self.count_atoms(|i| atom(i).degree == 2),
            "degree_3_count" => self.count_atoms(|i| atom(i).degree == 3),
            "degree_4plus_count" => self.count_atoms(|i| atom(i).degree >= 4),
            "h0_heavy_count" => self.count_atoms(|i| mol.total_h(i) == 0),
            "h1_heavy_count" => self.count_atoms(|i| mol.total_h(i) == 1),
            "h2_heavy_count" => self.count_atoms(|i| mol.total_h(i) == 2),
            "h3plus_heavy_count" => self.count_atoms(|i| mol.total_h(i) >= 3),
            "wiener_index" => self.connected_pairs().map(f64::from).sorted_sum(),
            "average_distance" => {
                let distances: Vec<f64> = self.connected_pairs().map(f64::from).collect();
                ratio(distances.iter().copied().sorted_sum(), distances.len() as f64)
            }
            "graph_diameter" => f64::from(self.connected_pairs().max().unwrap_or(0)),
            "graph_radius" => {
                let (comp, _) = self.largest_component();
                f64::from((0..self.heavy.len()).filter(|&p| self.component[p] == comp).map(|p| self.eccentricity(p)).min().unwrap_or(0))
            }
            "zagreb_m1" => (0..self.heavy.len()).map(|p| self.hdeg(p).powi(2)).sorted_sum(),
            "zagreb_m2" => self.heavy_bonds.iter().map(|&(_, a, b)| self.hdeg(a) * self.hdeg(b)).sorted_sum(),
            "chi0" => (0..self.heavy.len()).filter(|&p| !self.adj[p].is_empty()).map(|p| 1.0 / self.hdeg(p).sqrt()).sorted_sum(),
            "chi1" => self.heavy_bonds.iter().map(|&(_, a, b)| 1.0 / (self.hdeg(a) * self.hdeg(b)).sqrt()).sorted_sum(),
            "chi2" => self.chi2(),
            "harary_index" => self.connected_pairs().map(|d| 1.0 / f64::from(d)).sorted_sum(),
            "balaban_j" => self.balaban_j(),
            "kappa1" => self.kappa(1),
            "kappa2" => self.kappa(2),
            "kappa3" => self.kappa(3),
            "kier_flexibility" => ratio(self.kappa(1) * self.kappa(2), n),
            "path_count_2" => self.path_count(2),
            "path_count_3" => self.path_count(3),
            "path_count_4" => self.path_count(4),
            "path_count_5" => self.path_count(5),
            "path_count_6" => self.path_count(6),
            "mw_per_heavy_atom" => ratio(self.mass, n),
            "carbon_mass_fraction" => self.mass_fraction(&[6]),
            "nitrogen_mass_fraction" => self.mass_fraction(&[7]),
            "oxygen_mass_fraction" => self.mass_fraction(&[8]),
            "halogen_mass_fraction" => self.mass_fraction(&HALOGENS),
            "sulfur_mass_fraction" => self.mass_fraction(&[16]),
            "methyl_count" => self.count_atoms(|i| self.z(i) == 6 && atom(i).degree == 1 && mol.total_h(i) == 3),
            "carbonyl_count" => self.count_bonds(|b| {
                let (x, y) = self.bond_pair(b);
                mol.bond(b).order == BondOrder::Double && matches!((x, y), (6, 8) | (8, 6))
            }),
            "nitrogen_oxygen_bonds" => self.count_bonds(|b| matches!(self.bond_pair(b), (7, 8) | (8, 7))),
            "carbon_halogen_bonds" => self.count_bonds(|b| {
                let (x, y) = self.bond_pair(b);
                (x == 6 && HALOGENS.contains(&y)) || (y == 6 && HALOGENS.contains(&x))
            }),
            "carbon_nitrogen_bonds" => self.count_bonds(|b| matches!(self.bond_pair(b), (6, 7) | (7, 6))),
            "carbon_oxygen_bonds" => self.count_bonds(|b| matches!(self.bond_pair(b), (6, 8) | (8, 6))),
            "heteroatom_heteroatom_bonds" => self.count_bonds(|b| {
                let (x, y) = self.bond_pair(b);
                x != 6 && y != 6
            }),
            "terminal_heavy_atoms" => self.count_atoms(|i| atom(i).degree == 1),
            "branch_atoms" => self.count_atoms(|i| atom(i).degree >= 3),
            "ring_heteroatom_count" => self.count_atoms(|i| atom(i).in_ring && self.z(i) != 6),
            "ring_carbon_count" => self.count_atoms(|i| atom(i).in_ring && self.z(i) == 6),
            "exocyclic_double_bonds" => self.count_bonds(|b| {
                let bond = mol.bond(b);
                bond.order == BondOrder::Double && !bond.in_ring && (atom(bond.a).in_ring || atom(bond.b).in_ring)
            }),
            "hydroxyl_count" => self.count_atoms(|i| self.z(i) == 8 && atom(i).degree == 1 && mol.total_h(i) == 1),
            "primary_amine_nh2_count" => {
                self.count_atoms(|i| self.z(i) == 7 && atom(i).degree == 1 && mol.total_h(i) == 2)
            }
            "ring_fusion_atoms" => self.count_atoms(|i| {
                mol.neighbors(i).iter().filter(|nb| mol.bond(nb.bond).in_ring).count() >= 3
            }),
            "carbon_hydrogen_ratio" => ratio(carbons, self.hydrogens),
            "heteroatom_carbon_ratio" => ratio(hetero, carbons),
            "mean_heavy_degree" => ratio((0..self.heavy.len()).map(|p| self.hdeg(p)).sorted_sum(), n),
            "max_heavy_degree" => (0..self.heavy.len()).map(|p| self.hdeg(p)).fold(0.0, f64::max),
            "unsaturation_degree" => {
                (2.0 * carbons + 2.0 + self.count_z(7) + self.count_z(15) - self.hydrogens - halogens) / 2.0
            }
            other if is_reserved(other) => 0.0,
            _ => return None,
        };
        Some(v)
    }

    fn rotatable(&self) -> f64 {
        self.heavy_bonds
            .iter()
            .filter(|&&(b, pa, pb)| {
                let bond = self.mol.bond(b);
                bond.order == BondOrder::Single && !bond.in_ring && self.adj[pa].len() > 1 && self.adj[pb].len() > 1
            })
            .count() as f64
    }
}

fn is_reserved(name: &str) -> bool {
    name.strip_prefix("reserved_").is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}
