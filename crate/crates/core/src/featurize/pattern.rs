//! Subgraph patterns: a small SMARTS-like grammar, its compiler, and pattern
//! sets loaded from tab-separated files.
//!
//! Atoms:
//! - bare `B C N O P S F Cl Br I` (aliphatic), `b c n o p s` (aromatic),
//!   `*` (any), `A` (aliphatic), `a` (aromatic);
//! - bracket expressions over primitives `El`, `el`, `#n`, `*`, `A`, `a`,
//!   `R`/`R0` (ring membership), `Dn` (heavy degree), `Hn` (total H),
//!   `Xn` (total connections), `+`, `+n`, `-`, `-n` (charge), combined with
//!   `!` (not), `&` or juxtaposition (and), `,` (or), `;` (low-priority and).
//!
//! Bonds: `-` single, `=` double, `#` triple, `:` aromatic, `~` any,
//! `@` ring bond, with the same operators. An omitted bond matches single or
//! aromatic. Branches use parentheses, ring closures use digits or `%nn`.

use std::collections::{BTreeMap, HashSet};
use std::ops::ControlFlow;

use thiserror::Error;

use crate::chem::element::by_symbol;
use crate::chem::substructure::{count_unique_embeddings, has_embedding, QueryGraph};
use crate::chem::{BondOrder, Molecule, Neighbor};
use crate::hash::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pattern {pattern:?} at offset {position}: {message}")]
pub struct PatternError {
    pub pattern: String,
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum AtomPrim {
    Any,
    Aromatic(bool),
    Element { number: u8, aromatic: Option<bool> },
    InRing(bool),
    HeavyDegree(u8),
    TotalH(u32),
    Connectivity(u32),
    Charge(i8),
}

impl AtomPrim {
    fn eval(&self, mol: &Molecule, t: usize) -> bool {
        let atom = mol.atom(t);
        match *self {
            AtomPrim::Any => true,
            AtomPrim::Aromatic(a) => atom.aromatic == a,
            AtomPrim::Element { number, aromatic } => {
                atom.atomic_number() == number && aromatic.is_none_or(|a| a == atom.aromatic)
            }
            AtomPrim::InRing(r) => atom.in_ring == r,
            AtomPrim::HeavyDegree(d) => atom.degree == d,
            AtomPrim::TotalH(h) => mol.total_h(t) == h,
            AtomPrim::Connectivity(x) => u32::from(atom.degree) + mol.total_h(t) == x,
            AtomPrim::Charge(c) => atom.formal_charge == c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BondPrim {
    Order(BondOrder),
    Any,
    Ring,
}

impl BondPrim {
    fn eval(&self, mol: &Molecule, t: usize) -> bool {
        let bond = mol.bond(t);
        match self {
            BondPrim::Order(o) => bond.order == *o,
            BondPrim::Any => true,
            BondPrim::Ring => bond.in_ring,
        }
    }
}

/// Boolean expression tree shared by atom and bond predicates.
#[derive(Debug, Clone, PartialEq)]
enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

impl<P> Expr<P> {
    fn eval(&self, f: &impl Fn(&P) -> bool) -> bool {
        match self {
            Expr::Prim(p) => f(p),
            Expr::Not(e) => !e.eval(f),
            Expr::And(es) => es.iter().all(|e| e.eval(f)),
            Expr::Or(es) => es.iter().any(|e| e.eval(f)),
        }
    }
}

fn default_bond() -> Expr<BondPrim> {
    Expr::Or(vec![Expr::Prim(BondPrim::Order(BondOrder::Single)), Expr::Prim(BondPrim::Order(BondOrder::Aromatic))])
}

/// A compiled pattern graph.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    atoms: Vec<Expr<AtomPrim>>,
    bonds: Vec<(usize, usize, Expr<BondPrim>)>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl Pattern {
    pub fn compile(text: &str) -> Result<Pattern, PatternError> {
        PatternParser::new(text).parse()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bonds.iter().map(|&(a, b, _)| (a, b))
    }

    /// Number of embeddings with distinct target atom sets.
    pub fn count_matches(&self, mol: &Molecule) -> usize {
        count_unique_embeddings(self, mol)
    }

    pub fn matches(&self, mol: &Molecule) -> bool {
        has_embedding(self, mol)
    }

    /// Every embedding, for callers that need the raw maps.
    pub fn for_each_match(&self, mol: &Molecule, mut f: impl FnMut(&[usize])) {
        crate::chem::substructure::for_each_embedding(self, mol, |m| {
            f(m);
            ControlFlow::Continue(())
        });
    }
}

impl QueryGraph for Pattern {
    fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    fn atom_matches(&self, q: usize, mol: &Molecule, t: usize) -> bool {
        self.atoms[q].eval(&|p: &AtomPrim| p.eval(mol, t))
    }

    fn bond_matches(&self, q: usize, mol: &Molecule, t: usize) -> bool {
        self.bonds[q].2.eval(&|p: &BondPrim| p.eval(mol, t))
    }
}

struct PatternParser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Expr<AtomPrim>>,
    bonds: Vec<(usize, usize, Expr<BondPrim>)>,
    rings: BTreeMap<u32, (usize, Option<Expr<BondPrim>>)>,
}

impl<'a> PatternParser<'a> {
    fn new(text: &'a str) -> Self {
        PatternParser { text, bytes: text.as_bytes(), pos: 0, atoms: Vec::new(), bonds: Vec::new(), rings: BTreeMap::new() }
    }

    fn err(&self, message: impl Into<String>) -> PatternError {
        PatternError { pattern: self.text.to_string(), position: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Pattern, PatternError> {
        if self.bytes.is_empty() {
            return Err(self.err("empty pattern"));
        }
        let mut stack: Vec<usize> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut pending: Option<Expr<BondPrim>> = None;
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(p) = prev else { return Err(self.err("branch before any atom")) };
                    if pending.is_some() {
                        return Err(self.err("bond before branch"));
                    }
                    if self.pos > 0 && self.bytes[self.pos - 1] == b'(' {
                        return Err(self.err("branch opens a branch"));
                    }
                    stack.push(p);
                    self.pos += 1;
                    if self.peek() == Some(b')') {
                        return Err(self.err("empty branch"));
                    }
                }
                b')' => {
                    let Some(p) = stack.pop() else { return Err(self.err("unbalanced ')'")) };
                    if pending.is_some() {
                        return Err(self.err("dangling bond"));
                    }
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(self.err("misplaced bond"));
                    }
                    pending = Some(self.bond_expr()?);
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else { return Err(self.err("ring closure before any atom")) };
                    let label = self.ring_label()?;
                    let bond = pending.take();
                    match self.rings.remove(&label) {
                        Some((other, open_bond)) => {
                            if other == p {
                                return Err(self.err("ring closure to itself"));
                            }
                            let expr = match (open_bond, bond) {
                                (Some(a), Some(b)) if a != b => return Err(self.err("conflicting ring bonds")),
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => default_bond(),
                            };
                            self.add_bond(other, p, expr)?;
                        }
                        None => {
                            self.rings.insert(label, (p, bond));
                        }
                    }
                }
                _ => {
                    let atom = self.atom()?;
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    if let Some(p) = prev {
                        let expr = pending.take().unwrap_or_else(default_bond);
                        self.add_bond(p, idx, expr)?;
                    }
                    prev = Some(idx);
                }
            }
        }
        if !stack.is_empty() {
            return Err(self.err("unclosed branch"));
        }
        if pending.is_some() {
            return Err(self.err("dangling bond"));
        }
        if let Some((label, _)) = self.rings.iter().next() {
            return Err(self.err(format!("unclosed ring {label}")));
        }
        let mut adjacency = vec![Vec::new(); self.atoms.len()];
        for (i, (a, b, _)) in self.bonds.iter().enumerate() {
            adjacency[*a].push(Neighbor { atom: *b, bond: i });
            adjacency[*b].push(Neighbor { atom: *a, bond: i });
        }
        Ok(Pattern { source: self.text.to_string(), atoms: self.atoms, bonds: self.bonds, adjacency })
    }

    fn add_bond(&mut self, a: usize, b: usize, expr: Expr<BondPrim>) -> Result<(), PatternError> {
        if self.bonds.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a)) {
            return Err(self.err("duplicate bond"));
        }
        self.bonds.push((a, b, expr));
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, PatternError> {
        if self.peek() == Some(b'%') {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
            let Some(d) = digits else { return Err(self.err("'%' needs two digits")) };
            self.pos += 3;
            Ok(u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0'))
        } else {
            let d = self.bytes[self.pos] - b'0';
            self.pos += 1;
            Ok(u32::from(d))
        }
    }

    fn bond_expr(&mut self) -> Result<Expr<BondPrim>, PatternError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' | b'&' | b',' | b';')) {
            self.pos += 1;
        }
        let text = &self.text[start..self.pos];
        let mut cursor = ExprCursor { text, pos: 0 };
        let expr = cursor.low_and(&mut |s: &str, pos: &mut usize| {
            let c = s.as_bytes()[*pos];
            *pos += 1;
            Some(match c {
                b'-' => BondPrim::Order(BondOrder::Single),
                b'=' => BondPrim::Order(BondOrder::Double),
                b'#' => BondPrim::Order(BondOrder::Triple),
                b':' => BondPrim::Order(BondOrder::Aromatic),
                b'~' => BondPrim::Any,
                b'@' => BondPrim::Ring,
                _ => return None,
            })
        });
        match expr {
            Some(e) if cursor.pos == text.len() => Ok(e),
            _ => {
                self.pos = start + cursor.pos;
                Err(self.err("bad bond expression"))
            }
        }
    }

    fn atom(&mut self) -> Result<Expr<AtomPrim>, PatternError> {
        let rest = &self.text[self.pos..];
        if rest.starts_with('[') {
            let Some(end) = rest.find(']') else { return Err(self.err("unterminated bracket")) };
            let body = &rest[1..end];
            if body.is_empty() {
                return Err(self.err("empty bracket"));
            }
            let mut cursor = ExprCursor { text: body, pos: 0 };
            let expr = cursor.low_and(&mut atom_primitive);
            match expr {
                Some(e) if cursor.pos == body.len() => {
                    self.pos += end + 1;
                    Ok(e)
                }
                _ => {
                    self.pos += 1 + cursor.pos;
                    Err(self.err("bad atom expression"))
                }
            }
        } else {
            for sym in ["Cl", "Br"] {
                if rest.starts_with(sym) {
                    self.pos += 2;
                    return Ok(element_prim(sym, Some(false)));
                }
            }
            let c = self.bytes[self.pos];
            let prim = match c {
                b'*' => Expr::Prim(AtomPrim::Any),
                b'A' => Expr::Prim(AtomPrim::Aromatic(false)),
                b'a' => Expr::Prim(AtomPrim::Aromatic(true)),
                b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => element_prim(&(c as char).to_string(), Some(false)),
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    element_prim(&(c.to_ascii_uppercase() as char).to_string(), Some(true))
                }
                _ => return Err(self.err(format!("unexpected character {:?}", rest.chars().next().unwrap_or(' ')))),
            };
            self.pos += 1;
            Ok(prim)
        }
    }
}

fn element_prim(symbol: &str, aromatic: Option<bool>) -> Expr<AtomPrim> {
    let number = by_symbol(symbol).expect("known element").atomic_number;
    Expr::Prim(AtomPrim::Element { number, aromatic })
}

fn read_number(s: &str, pos: &mut usize) -> Option<u32> {
    let digits = s[*pos..].bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n = s[*pos..*pos + digits].parse().ok();
    *pos += digits;
    n
}

const AROMATIC_SYMBOLS: [&str; 9] = ["b", "c", "n", "o", "p", "s", "se", "as", "te"];

fn atom_primitive(s: &str, pos: &mut usize) -> Option<AtomPrim> {
    let rest = &s[*pos..];
    let b = rest.as_bytes();
    // two-letter element symbols take priority over one-letter primitives
    if b.len() >= 2 && b[0].is_ascii_uppercase() && b[1].is_ascii_lowercase() {
        if let Some(el) = by_symbol(&rest[..2]) {
            *pos += 2;
            return Some(AtomPrim::Element { number: el.atomic_number, aromatic: Some(false) });
        }
    }
    for sym in ["se", "as", "te"] {
        if rest.starts_with(sym) {
            *pos += 2;
            let el = by_symbol(&format!("{}{}", sym[..1].to_ascii_uppercase(), &sym[1..]))?;
            return Some(AtomPrim::Element { number: el.atomic_number, aromatic: Some(true) });
        }
    }
    let c = b[0];
    *pos += 1;
    match c {
        b'*' => Some(AtomPrim::Any),
        b'a' => Some(AtomPrim::Aromatic(true)),
        b'A' => Some(AtomPrim::Aromatic(false)),
        b'#' => {
            let n = read_number(s, pos)?;
            (1..=118).contains(&n).then_some(AtomPrim::Element { number: n as u8, aromatic: None })
        }
        b'R' => Some(AtomPrim::InRing(read_number(s, pos) != Some(0))),
        b'D' => Some(AtomPrim::HeavyDegree(u8::try_from(read_number(s, pos).unwrap_or(1)).ok()?)),
        b'H' => Some(AtomPrim::TotalH(read_number(s, pos).unwrap_or(1))),
        b'X' => Some(AtomPrim::Connectivity(read_number(s, pos).unwrap_or(1))),
        b'+' | b'-' => {
            let sign: i32 = if c == b'+' { 1 } else { -1 };
            let mag = read_number(s, pos).unwrap_or(1) as i32;
            i8::try_from(sign * mag).ok().map(AtomPrim::Charge)
        }
        b'A'..=b'Z' => {
            let el = by_symbol(&(c as char).to_string())?;
            Some(AtomPrim::Element { number: el.atomic_number, aromatic: Some(false) })
        }
        _ => {
            let sym = (c as char).to_string();
            if !AROMATIC_SYMBOLS.contains(&sym.as_str()) {
                return None;
            }
            let el = by_symbol(&sym.to_ascii_uppercase())?;
            Some(AtomPrim::Element { number: el.atomic_number, aromatic: Some(true) })
        }
    }
}

/// Precedence-climbing parser over `;` < `,` < `&`/juxtaposition < `!`.
struct ExprCursor<'a> {
    text: &'a str,
    pos: usize,
}

impl ExprCursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn low_and<P>(&mut self, prim: &mut impl FnMut(&str, &mut usize) -> Option<P>) -> Option<Expr<P>> {
        let mut parts = vec![self.or(prim)?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            parts.push(self.or(prim)?);
        }
        Some(collapse(parts, Expr::And))
    }

    fn or<P>(&mut self, prim: &mut impl FnMut(&str, &mut usize) -> Option<P>) -> Option<Expr<P>> {
        let mut parts = vec![self.high_and(prim)?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.high_and(prim)?);
        }
        Some(collapse(parts, Expr::Or))
    }

    fn high_and<P>(&mut self, prim: &mut impl FnMut(&str, &mut usize) -> Option<P>) -> Option<Expr<P>> {
        let mut parts = vec![self.unary(prim)?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    parts.push(self.unary(prim)?);
                }
                Some(b';' | b',') | None => break,
                Some(_) => parts.push(self.unary(prim)?),
            }
        }
        Some(collapse(parts, Expr::And))
    }

    fn unary<P>(&mut self, prim: &mut impl FnMut(&str, &mut usize) -> Option<P>) -> Option<Expr<P>> {
        match self.peek()? {
            b'!' => {
                self.pos += 1;
                Some(Expr::Not(Box::new(self.unary(prim)?)))
            }
            b'&' | b',' | b';' => None,
            _ => prim(self.text, &mut self.pos).map(Expr::Prim),
        }
    }
}

fn collapse<P>(mut parts: Vec<Expr<P>>, wrap: fn(Vec<Expr<P>>) -> Expr<P>) -> Expr<P> {
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        wrap(parts)
    }
}

/// How raw match counts map to output values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// 1 if the pattern occurs at least once.
    Presence,
    /// Number of distinct matched atom sets.
    Count,
}

#[derive(Debug, Error)]
pub enum PatternSetError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {source}")]
    Pattern { line: usize, source: PatternError },
}

#[derive(Debug, Clone)]
pub struct PatternEntry {
    pub index: usize,
    pub pattern: Pattern,
    pub label: String,
}

/// An ordered, versioned list of patterns with a fixed output arity.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub name: String,
    pub version: String,
    pub arity: usize,
    pub mode: MatchMode,
    pub entries: Vec<PatternEntry>,
    /// SHA-256 of the source text.
    pub content_hash: String,
}

impl PatternSet {
    /// Parses `index<TAB>pattern<TAB>label` lines; `#` starts a comment line
    /// and `# version: V` sets the version.
    pub fn parse(name: &str, text: &str, arity: usize, mode: MatchMode) -> Result<PatternSet, PatternSetError> {
        let mut entries = Vec::new();
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
            let fmt = |message: String| PatternSetError::Format { line: line_no, message };
            let mut fields = line.splitn(3, '\t');
            let (Some(idx), Some(pat), Some(label)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(fmt("expected index<TAB>pattern<TAB>label".into()));
            };
            let index: usize = idx.trim().parse().map_err(|_| fmt(format!("bad index {idx:?}")))?;
            if index >= arity {
                return Err(fmt(format!("index {index} outside arity {arity}")));
            }
            if !seen.insert(index) {
                return Err(fmt(format!("duplicate index {index}")));
            }
            let pattern = Pattern::compile(pat.trim()).map_err(|source| PatternSetError::Pattern { line: line_no, source })?;
            entries.push(PatternEntry { index, pattern, label: label.trim().to_string() });
        }
        Ok(PatternSet { name: name.to_string(), version, arity, mode, entries, content_hash: sha256_hex(text.as_bytes()) })
    }

    /// Output vector of length `arity`; undefined positions stay 0.
    pub fn match_molecule(&self, mol: &Molecule) -> Vec<f64> {
        let mut out = vec![0.0; self.arity];
        self.match_into(mol, &mut out);
        out
    }

    pub fn match_into(&self, mol: &Molecule, out: &mut [f64]) {
        assert_eq!(out.len(), self.arity);
        out.fill(0.0);
        for e in &self.entries {
            out[e.index] = match self.mode {
                MatchMode::Presence => f64::from(u8::from(e.pattern.matches(mol))),
                MatchMode::Count => e.pattern.count_matches(mol) as f64,
            };
        }
    }
}
