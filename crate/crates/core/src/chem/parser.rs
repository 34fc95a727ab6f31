use std::collections::{BTreeMap, HashSet};

use super::element::{self, Element};
use super::{
    ring, Atom, Bond, BondDirection, BondOrder, Chirality, Molecule, ParseError, ParseErrorKind,
};

const MAX_CHARGE: i32 = 15;

/// Bond symbol as written, before the implicit order is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondSymbol {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            b'-' => BondSymbol::Single,
            b'=' => BondSymbol::Double,
            b'#' => BondSymbol::Triple,
            b':' => BondSymbol::Aromatic,
            b'/' => BondSymbol::Up,
            b'\\' => BondSymbol::Down,
            _ => return None,
        })
    }
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSymbol>,
    position: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    offset: usize,
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    branches: Vec<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(BondSymbol, usize)>,
    rings: BTreeMap<u32, RingOpen>,
    bonded: HashSet<(usize, usize)>,
}

/// Parse a SMILES string into a validated molecular graph.
///
/// Leading and trailing whitespace is ignored. Atom order follows writing
/// order. Error positions are byte offsets into the untrimmed input.
pub fn parse_smiles(text: &str) -> Result<Molecule, ParseError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::EmptyInput,
            position: 0,
            message: "no SMILES text".into(),
        });
    }
    let offset = text.len() - text.trim_start().len();
    let mut parser = Parser {
        text: trimmed,
        bytes: trimmed.as_bytes(),
        offset,
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        branches: Vec::new(),
        prev: None,
        pending: None,
        rings: BTreeMap::new(),
        bonded: HashSet::new(),
    };
    parser.run()?;
    parser.finish(trimmed)
}

impl<'a> Parser<'a> {
    fn err(&self, kind: ParseErrorKind, at: usize, message: impl Into<String>) -> ParseError {
        ParseError { kind, position: self.offset + at, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bad_token_here(&self) -> ParseError {
        let ch = self.text[self.pos..].chars().next().unwrap_or('?');
        self.err(ParseErrorKind::BadToken, self.pos, format!("unexpected character {ch:?}"))
    }

    fn run(&mut self) -> Result<(), ParseError> {
        while let Some(b) = self.peek() {
            match b {
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom)?;
                }
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(self.err(ParseErrorKind::BadToken, self.pos, "branch without a preceding atom"));
                    };
                    if let Some((_, at)) = self.pending {
                        return Err(self.err(ParseErrorKind::BadToken, at, "bond symbol before branch"));
                    }
                    if self.bytes.get(self.pos + 1) == Some(&b')') {
                        return Err(self.err(ParseErrorKind::BadToken, self.pos, "empty branch"));
                    }
                    self.branches.push((prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(self.err(ParseErrorKind::UnbalancedParenthesis, self.pos, "')' without matching '('"));
                    };
                    if let Some((_, at)) = self.pending {
                        return Err(self.err(ParseErrorKind::BadToken, at, "dangling bond at end of branch"));
                    }
                    if self.prev.is_none() {
                        return Err(self.err(ParseErrorKind::BadToken, self.pos, "branch ends without an atom"));
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'.' => {
                    if self.prev.is_none() {
                        return Err(self.err(ParseErrorKind::BadToken, self.pos, "'.' without a preceding atom"));
                    }
                    if let Some((_, at)) = self.pending {
                        return Err(self.err(ParseErrorKind::BadToken, at, "bond symbol before '.'"));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                _ => {
                    if let Some(sym) = BondSymbol::from_byte(b) {
                        if self.prev.is_none() {
                            return Err(self.err(ParseErrorKind::BadToken, self.pos, "bond symbol without a preceding atom"));
                        }
                        if self.pending.is_some() {
                            return Err(self.err(ParseErrorKind::BadToken, self.pos, "two consecutive bond symbols"));
                        }
                        self.pending = Some((sym, self.pos));
                        self.pos += 1;
                    } else if let Some(atom) = self.organic_atom()? {
                        self.add_atom(atom)?;
                    } else {
                        return Err(self.bad_token_here());
                    }
                }
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Option<Atom>, ParseError> {
        let start = self.pos;
        let b = self.bytes[start];
        let next = self.bytes.get(start + 1).copied();
        let (symbol, aromatic, len) = match b {
            b'C' if next == Some(b'l') => ("Cl", false, 2),
            b'B' if next == Some(b'r') => ("Br", false, 2),
            b'B' => ("B", false, 1),
            b'C' => ("C", false, 1),
            b'N' => ("N", false, 1),
            b'O' => ("O", false, 1),
            b'P' => ("P", false, 1),
            b'S' => ("S", false, 1),
            b'F' => ("F", false, 1),
            b'I' => ("I", false, 1),
            b'b' => ("B", true, 1),
            b'c' => ("C", true, 1),
            b'n' => ("N", true, 1),
            b'o' => ("O", true, 1),
            b'p' => ("P", true, 1),
            b's' => ("S", true, 1),
            _ => return Ok(None),
        };
        self.pos += len;
        let element = element::by_symbol(symbol).expect("organic subset is in the table");
        Ok(Some(new_atom(element, aromatic, false, start)))
    }

    fn bracket_atom(&mut self) -> Result<Atom, ParseError> {
        let open = self.pos;
        self.pos += 1;

        let isotope = match self.digits() {
            Some((value, at)) => match u16::try_from(value) {
                Ok(v) => Some(v),
                Err(_) => return Err(self.err(ParseErrorKind::BadToken, at, "isotope out of range")),
            },
            None => None,
        };

        let sym_start = self.pos;
        let (element, aromatic) = self.bracket_symbol()?;
        let mut atom = new_atom(element, aromatic, true, sym_start);
        atom.isotope = isotope;

        if self.peek() == Some(b'@') {
            atom.chirality = Some(self.chirality());
        }

        if self.peek() == Some(b'H') {
            self.pos += 1;
            atom.explicit_h = match self.digits() {
                Some((n, at)) => u8::try_from(n)
                    .ok()
                    .filter(|&n| n <= 9)
                    .ok_or_else(|| self.err(ParseErrorKind::BadToken, at, "hydrogen count out of range"))?,
                None => 1,
            };
        }

        if matches!(self.peek(), Some(b'+') | Some(b'-')) {
            atom.formal_charge = self.charge()?;
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.digits().is_none() {
                return Err(self.err(ParseErrorKind::BadToken, self.pos, "atom class needs digits"));
            }
        }

        match self.peek() {
            Some(b']') => {
                self.pos += 1;
                Ok(atom)
            }
            Some(_) => Err(self.bad_token_here()),
            None => Err(self.err(ParseErrorKind::BadToken, open, "unterminated bracket atom")),
        }
    }

    fn bracket_symbol(&mut self) -> Result<(&'static Element, bool), ParseError> {
        let start = self.pos;
        let Some(first) = self.peek() else {
            return Err(self.err(ParseErrorKind::BadToken, start, "unterminated bracket atom"));
        };
        let second = self.bytes.get(start + 1).copied();
        if first.is_ascii_uppercase() {
            if let Some(s) = second.filter(u8::is_ascii_lowercase) {
                let two = [first, s];
                let sym = std::str::from_utf8(&two).expect("ascii");
                if let Some(e) = element::by_symbol(sym) {
                    self.pos += 2;
                    return Ok((e, false));
                }
            }
            let one = [first];
            let sym = std::str::from_utf8(&one).expect("ascii");
            if let Some(e) = element::by_symbol(sym) {
                self.pos += 1;
                return Ok((e, false));
            }
            let end = if second.is_some_and(|c| c.is_ascii_lowercase()) { start + 2 } else { start + 1 };
            return Err(self.err(
                ParseErrorKind::UnknownElement,
                start,
                format!("unknown element {:?}", &self.text[start..end]),
            ));
        }
        if first.is_ascii_lowercase() {
            // aromatic two-letter forms first
            if let Some(s) = second {
                let sym = match (first, s) {
                    (b's', b'e') => Some("Se"),
                    (b'a', b's') => Some("As"),
                    (b't', b'e') => Some("Te"),
                    _ => None,
                };
                if let Some(sym) = sym {
                    self.pos += 2;
                    return Ok((element::by_symbol(sym).expect("in table"), true));
                }
            }
            let sym = match first {
                b'b' => Some("B"),
                b'c' => Some("C"),
                b'n' => Some("N"),
                b'o' => Some("O"),
                b'p' => Some("P"),
                b's' => Some("S"),
                _ => None,
            };
            if let Some(sym) = sym {
                self.pos += 1;
                return Ok((element::by_symbol(sym).expect("in table"), true));
            }
            return Err(self.err(ParseErrorKind::UnknownElement, start, "unknown aromatic element"));
        }
        if first == b'*' {
            return Err(self.err(ParseErrorKind::UnknownElement, start, "wildcard atoms are not supported"));
        }
        Err(self.bad_token_here())
    }

    fn chirality(&mut self) -> Chirality {
        self.pos += 1;
        if self.peek() == Some(b'@') {
            self.pos += 1;
            return Chirality::Clockwise;
        }
        let rest = &self.bytes[self.pos..];
        for class in [b"TH", b"AL", b"SP", b"TB", b"OH"] {
            if rest.starts_with(class) {
                let start = self.pos;
                self.pos += 2;
                while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
                return Chirality::Class(self.text[start - 1..self.pos].to_string());
            }
        }
        Chirality::CounterClockwise
    }

    fn charge(&mut self) -> Result<i8, ParseError> {
        let start = self.pos;
        let sign_byte = self.bytes[start];
        let sign: i32 = if sign_byte == b'+' { 1 } else { -1 };
        self.pos += 1;
        let magnitude: i32 = if let Some((n, _)) = self.digits() {
            i32::try_from(n).unwrap_or(i32::MAX)
        } else {
            let mut m = 1;
            while self.peek() == Some(sign_byte) {
                m += 1;
                self.pos += 1;
            }
            m
        };
        if matches!(self.peek(), Some(b'+') | Some(b'-')) {
            return Err(self.err(ParseErrorKind::BadCharge, start, "malformed charge"));
        }
        if magnitude > MAX_CHARGE {
            return Err(self.err(ParseErrorKind::BadCharge, start, format!("charge magnitude {magnitude} exceeds {MAX_CHARGE}")));
        }
        Ok((sign * magnitude) as i8)
    }

    /// Reads a run of decimal digits; saturates instead of overflowing.
    fn digits(&mut self) -> Option<(u64, usize)> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(b) = self.peek().filter(u8::is_ascii_digit) {
            value = value.saturating_mul(10).saturating_add(u64::from(b - b'0'));
            self.pos += 1;
        }
        (self.pos > start).then_some((value, start))
    }

    fn add_atom(&mut self, atom: Atom) -> Result<(), ParseError> {
        let idx = self.atoms.len();
        let at = atom.position;
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let symbol = self.pending.take();
            self.connect(prev, idx, symbol.map(|s| s.0), symbol.map_or(at, |s| s.1))?;
        } else if let Some((_, pos)) = self.pending {
            return Err(self.err(ParseErrorKind::BadToken, pos, "bond symbol without a preceding atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        let number = if self.bytes[start] == b'%' {
            let d = &self.bytes[start + 1..];
            if d.len() < 2 || !d[0].is_ascii_digit() || !d[1].is_ascii_digit() {
                return Err(self.err(ParseErrorKind::BadToken, start, "'%' must be followed by two digits"));
            }
            self.pos += 3;
            u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
        } else {
            self.pos += 1;
            u32::from(self.bytes[start] - b'0')
        };
        let Some(atom) = self.prev else {
            return Err(self.err(ParseErrorKind::BadToken, start, "ring bond without a preceding atom"));
        };
        let written = self.pending.take();
        match self.rings.remove(&number) {
            Some(open) => {
                let symbol = match (open.bond, written.map(|w| w.0)) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(self.err(ParseErrorKind::BadToken, start, format!("conflicting bond symbols for ring bond {number}")));
                    }
                    (Some(a), _) => Some(a),
                    (None, b) => b,
                };
                if open.atom == atom {
                    return Err(self.err(ParseErrorKind::BadToken, start, "ring bond closes on its own atom"));
                }
                self.connect(open.atom, atom, symbol, start)?;
            }
            None => {
                self.rings.insert(
                    number,
                    RingOpen { atom, bond: written.map(|w| w.0), position: start },
                );
            }
        }
        Ok(())
    }

    fn connect(&mut self, a: usize, b: usize, symbol: Option<BondSymbol>, at: usize) -> Result<(), ParseError> {
        if !self.bonded.insert((a.min(b), a.max(b))) {
            return Err(self.err(ParseErrorKind::BadToken, at, "duplicate bond between the same atoms"));
        }
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        let (order, direction) = match symbol {
            None if both_aromatic => (BondOrder::Aromatic, None),
            None | Some(BondSymbol::Single) => (BondOrder::Single, None),
            Some(BondSymbol::Up) => (BondOrder::Single, Some(BondDirection::Up)),
            Some(BondSymbol::Down) => (BondOrder::Single, Some(BondDirection::Down)),
            Some(BondSymbol::Double) => (BondOrder::Double, None),
            Some(BondSymbol::Triple) => (BondOrder::Triple, None),
            Some(BondSymbol::Aromatic) => {
                if !both_aromatic {
                    return Err(self.err(ParseErrorKind::BadToken, at, "aromatic bond between non-aromatic atoms"));
                }
                (BondOrder::Aromatic, None)
            }
        };
        self.bonds.push(Bond { a, b, order, in_ring: false, direction });
        Ok(())
    }

    fn finish(mut self, source: &str) -> Result<Molecule, ParseError> {
        if let Some((_, at)) = self.pending {
            return Err(self.err(ParseErrorKind::BadToken, at, "dangling bond symbol"));
        }
        if let Some(&(_, at)) = self.branches.last() {
            return Err(self.err(ParseErrorKind::UnbalancedParenthesis, at, "'(' is never closed"));
        }
        if let Some((number, open)) = self.rings.iter().next() {
            return Err(self.err(ParseErrorKind::UnclosedRingBond, open.position, format!("ring bond {number} is never closed")));
        }
        if self.prev.is_none() {
            return Err(self.err(ParseErrorKind::BadToken, self.bytes.len() - 1, "trailing '.'"));
        }

        let n = self.atoms.len();
        let mut bond_sum = vec![0u32; n];
        let mut heavy_degree = vec![0u8; n];
        let mut h_neighbors = vec![0u32; n];
        for bond in &self.bonds {
            for (x, y) in [(bond.a, bond.b), (bond.b, bond.a)] {
                bond_sum[x] += u32::from(bond.order.valence());
                if self.atoms[y].is_hydrogen() {
                    h_neighbors[x] += 1;
                } else {
                    heavy_degree[x] = heavy_degree[x].saturating_add(1);
                }
            }
        }

        for i in 0..n {
            self.atoms[i].degree = heavy_degree[i];
            if !self.atoms[i].bracket {
                let h = implicit_hydrogens(&self.atoms[i], bond_sum[i]).ok_or_else(|| {
                    self.err(
                        ParseErrorKind::ValenceViolation,
                        self.atoms[i].position,
                        format!("{} with bond order sum {} exceeds allowed valence", self.atoms[i].symbol(), bond_sum[i]),
                    )
                })?;
                self.atoms[i].implicit_h = h;
            }
            let atom = &self.atoms[i];
            if let Some(allowed) = element::charged_valences(atom.element, atom.formal_charge) {
                let used = bond_sum[i] + u32::from(atom.explicit_h) + u32::from(atom.implicit_h);
                let max = u32::from(*allowed.iter().max().expect("non-empty"));
                if used > max {
                    return Err(self.err(
                        ParseErrorKind::ValenceViolation,
                        atom.position,
                        format!("{} (charge {}) uses valence {used}, allowed at most {max}", atom.symbol(), atom.formal_charge),
                    ));
                }
            }
        }

        let mut mol = Molecule::from_parts(self.atoms, self.bonds, source.to_string());
        let flags = ring::ring_membership(&mol);
        for (atom, flag) in mol.atoms.iter_mut().zip(&flags.atoms) {
            atom.in_ring = *flag;
        }
        for (bond, flag) in mol.bonds.iter_mut().zip(&flags.bonds) {
            bond.in_ring = *flag;
        }
        Ok(mol)
    }
}

fn new_atom(element: &'static Element, aromatic: bool, bracket: bool, position: usize) -> Atom {
    Atom {
        element,
        aromatic,
        formal_charge: 0,
        explicit_h: 0,
        implicit_h: 0,
        in_ring: false,
        degree: 0,
        isotope: None,
        chirality: None,
        bracket,
        position,
    }
}

/// Implicit hydrogens for an organic-subset atom. Aromatic atoms only use
/// their lowest valence and reserve one unit for the pi system when it fits.
fn implicit_hydrogens(atom: &Atom, bond_sum: u32) -> Option<u8> {
    let valences = atom.element.valences;
    if atom.aromatic {
        let target = u32::from(valences[0]);
        if bond_sum + 1 <= target {
            return Some((target - bond_sum - 1) as u8);
        }
        let max = u32::from(*valences.iter().max()?);
        return (bond_sum <= max).then_some(0);
    }
    valences
        .iter()
        .map(|&v| u32::from(v))
        .find(|&v| v >= bond_sum)
        .map(|v| (v - bond_sum) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(text: &str) -> ParseErrorKind {
        parse_smiles(text).unwrap_err().kind
    }

    #[test]
    fn ethanol() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atom_count(), 3);
        assert_eq!(m.bonds().len(), 2);
        let symbols: Vec<_> = m.atoms().iter().map(|a| a.symbol()).collect();
        assert_eq!(symbols, ["C", "C", "O"]);
        let h: Vec<_> = m.atoms().iter().map(|a| a.implicit_h).collect();
        assert_eq!(h, [3, 2, 1]);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Single));
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.symbol() == "C" && a.implicit_h == 1));
        assert_eq!(m.bonds().len(), 6);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Aromatic && b.in_ring));
        assert_eq!(m.ring_count(), 1);
    }

    #[test]
    fn ionic_pair() {
        let m = parse_smiles("[Na+].[Cl-]").unwrap();
        assert_eq!(m.component_count(), 2);
        assert_eq!(m.bonds().len(), 0);
        assert_eq!(m.atom(0).formal_charge, 1);
        assert_eq!(m.atom(1).formal_charge, -1);
        assert_eq!(m.atom(0).implicit_h, 0);
    }

    #[test]
    fn error_kinds() {
        assert_eq!(kind("C("), ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(kind("C)"), ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(kind("C1CC"), ParseErrorKind::UnclosedRingBond);
        assert_eq!(kind("[Xx]"), ParseErrorKind::UnknownElement);
        assert_eq!(kind("[C+-]"), ParseErrorKind::BadCharge);
        assert_eq!(kind("[C+99]"), ParseErrorKind::BadCharge);
        assert_eq!(kind("C(C)(C)(C)(C)C"), ParseErrorKind::ValenceViolation);
        assert_eq!(kind("   "), ParseErrorKind::EmptyInput);
        assert_eq!(kind(""), ParseErrorKind::EmptyInput);
        assert_eq!(kind("CXC"), ParseErrorKind::BadToken);
        assert_eq!(kind("Na"), ParseErrorKind::BadToken);
        assert_eq!(kind("C=="), ParseErrorKind::BadToken);
        assert_eq!(kind("C11"), ParseErrorKind::BadToken);
        assert_eq!(kind("C12CC12"), ParseErrorKind::BadToken);
        assert_eq!(kind("CC:C"), ParseErrorKind::BadToken);
        assert_eq!(kind("C."), ParseErrorKind::BadToken);
        assert_eq!(kind("[CH4"), ParseErrorKind::BadToken);
        assert_eq!(kind("C()C"), ParseErrorKind::BadToken);
    }

    #[test]
    fn error_positions_point_into_input() {
        let e = parse_smiles("  CC(C").unwrap_err();
        assert_eq!(e.position, 4);
        let e = parse_smiles("CCé").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadToken);
        assert_eq!(e.position, 2);
    }

    #[test]
    fn bracket_details() {
        let m = parse_smiles("[13CH3][C@@H](N)[O-]").unwrap();
        assert_eq!(m.atom(0).isotope, Some(13));
        assert_eq!(m.atom(0).explicit_h, 3);
        assert_eq!(m.atom(0).implicit_h, 0);
        assert_eq!(m.atom(1).chirality, Some(Chirality::Clockwise));
        assert_eq!(m.atom(3).formal_charge, -1);
        let m = parse_smiles("[Fe++]").unwrap();
        assert_eq!(m.atom(0).formal_charge, 2);
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atom(0).formal_charge, 1);
        assert!(parse_smiles("[NH5+]").is_err());
        assert!(parse_smiles("[CH3:1]C").is_ok());
    }

    #[test]
    fn two_digit_ring_closures() {
        let m = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!(m.ring_count(), 1);
        assert!(m.atoms().iter().all(|a| a.in_ring));
        assert_eq!(kind("C%1"), ParseErrorKind::BadToken);
    }

    #[test]
    fn ring_bond_symbols() {
        let m = parse_smiles("C=1CCCCC1").unwrap();
        let closing = m.bond_between(0, 5).unwrap();
        assert_eq!(m.bond(closing).order, BondOrder::Double);
        assert_eq!(kind("C=1CCCCC#1"), ParseErrorKind::BadToken);
    }

    #[test]
    fn aromatic_hydrogens() {
        let pyridine = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(pyridine.atom(3).implicit_h, 0);
        let thiophene = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(thiophene.atom(3).implicit_h, 0);
        let naphthalene = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(naphthalene.atom(3).implicit_h, 0);
        assert_eq!(naphthalene.atom(0).implicit_h, 1);
        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(pyrrole.total_h(3), 1);
    }

    #[test]
    fn stereo_marks_are_single_bonds() {
        let m = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(m.bond(0).order, BondOrder::Single);
        assert_eq!(m.bond(0).direction, Some(BondDirection::Up));
        assert_eq!(m.bond(1).order, BondOrder::Double);
    }

    #[test]
    fn hypervalent_sulfur_and_phosphorus() {
        assert!(parse_smiles("CS(=O)(=O)C").is_ok());
        assert!(parse_smiles("OP(=O)(O)O").is_ok());
        assert_eq!(parse_smiles("CS(=O)(=O)C").unwrap().atom(1).implicit_h, 0);
        assert_eq!(kind("N(=O)=O"), ParseErrorKind::ValenceViolation);
        assert!(parse_smiles("C[N+](=O)[O-]").is_ok());
    }

    #[test]
    fn explicit_hydrogen_atoms() {
        let m = parse_smiles("[H]C([H])([H])[H]").unwrap();
        assert_eq!(m.heavy_atom_count(), 1);
        assert_eq!(m.atom(1).degree, 0);
        assert_eq!(m.total_h(1), 4);
    }
}
