//! Tokenizer and graph builder for the SMILES subset the pipeline accepts.
//!
//! Input is expected to be canonical and free of isomeric information.
//! Stereo markers and multi-component (dot-separated) strings are rejected.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::features::{atom_features, FEATURE_DIM};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    /// Byte offset of the offending token.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    NonAscii,
    UnterminatedBracket,
    MalformedRingClosure,
    UnclosedRing(u32),
    UnbalancedParentheses,
    EmptyBranch,
    UnknownAtom(String),
    InvalidBracketAtom(String),
    Disconnected,
    Stereo,
    DanglingBond,
    SelfBond,
    DuplicateBond,
    ConflictingRingBond,
}

impl fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "empty SMILES"),
            Self::NonAscii => write!(f, "non-ASCII character"),
            Self::UnterminatedBracket => write!(f, "unterminated bracket atom"),
            Self::MalformedRingClosure => write!(f, "malformed %nn ring closure"),
            Self::UnclosedRing(d) => write!(f, "unclosed ring {d}"),
            Self::UnbalancedParentheses => write!(f, "unbalanced parentheses"),
            Self::EmptyBranch => write!(f, "empty or misplaced branch"),
            Self::UnknownAtom(s) => write!(f, "unknown atom symbol {s:?}"),
            Self::InvalidBracketAtom(s) => write!(f, "invalid bracket atom {s:?}"),
            Self::Disconnected => write!(f, "dot-disconnected components are not supported"),
            Self::Stereo => write!(f, "stereochemistry markers are not supported"),
            Self::DanglingBond => write!(f, "bond symbol without two atoms"),
            Self::SelfBond => write!(f, "ring closure bonds an atom to itself"),
            Self::DuplicateBond => write!(f, "duplicate bond between the same atoms"),
            Self::ConflictingRingBond => write!(f, "ring closure bond orders disagree"),
        }
    }
}

fn err<T>(kind: SmilesErrorKind, position: usize) -> Result<T, SmilesError> {
    Err(SmilesError { kind, position })
}

/// Splits a SMILES string into tokens. Concatenating the tokens gives back the
/// input exactly.
pub fn tokenize_smiles(s: &str) -> Result<Vec<&str>, SmilesError> {
    Ok(tokenize_with_offsets(s)?.into_iter().map(|(_, t)| t).collect())
}

pub(crate) fn tokenize_with_offsets(s: &str) -> Result<Vec<(usize, &str)>, SmilesError> {
    if s.is_empty() {
        return err(SmilesErrorKind::Empty, 0);
    }
    if let Some(pos) = s.bytes().position(|b| !b.is_ascii()) {
        return err(SmilesErrorKind::NonAscii, pos);
    }
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let len = match bytes[i] {
            b'[' => match bytes[i..].iter().position(|&b| b == b']') {
                Some(close) => close + 1,
                None => return err(SmilesErrorKind::UnterminatedBracket, i),
            },
            b'%' => {
                let digits = bytes.get(i + 1..i + 3);
                if !digits.is_some_and(|d| d.iter().all(u8::is_ascii_digit)) {
                    return err(SmilesErrorKind::MalformedRingClosure, i);
                }
                3
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => 2,
            b'B' if bytes.get(i + 1) == Some(&b'r') => 2,
            _ => 1,
        };
        tokens.push((i, &s[i..i + len]));
        i += len;
    }
    Ok(tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order times two, so aromatic bonds count 1.5 without floats.
    fn doubled(self) -> u32 {
        match self {
            Self::Single => 2,
            Self::Double => 4,
            Self::Triple => 6,
            Self::Aromatic => 3,
        }
    }

    fn from_symbol(c: u8) -> Option<Self> {
        match c {
            b'-' => Some(Self::Single),
            b'=' => Some(Self::Double),
            b'#' => Some(Self::Triple),
            b':' => Some(Self::Aromatic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    /// Element symbol with standard capitalisation (`"Cl"`, `"C"`).
    pub element: String,
    pub aromatic: bool,
    pub charge: i32,
    /// Hydrogens not written as separate atoms: the bracket H count for
    /// bracket atoms, otherwise filled from the default valence.
    pub implicit_h: u32,
    pub degree: u32,
    pub bracket: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

/// Parsed molecule: atoms in reading order, undirected bonds with `a < b`,
/// and the per-atom feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub atom_features: Tensor,
    pub ring_closures: usize,
}

impl MoleculeGraph {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(|b| (b.a, b.b)).collect()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<BondOrder> {
        let (a, b) = (a.min(b), a.max(b));
        self.bonds.iter().find(|x| x.a == a && x.b == b).map(|x| x.order)
    }
}

const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

const AROMATIC_BRACKET: &[&str] = &["b", "c", "n", "o", "p", "s", "se", "as", "te"];

fn default_valence(element: &str) -> Option<u32> {
    Some(match element {
        "B" => 3,
        "C" => 4,
        "N" => 3,
        "O" => 2,
        "P" => 3,
        "S" => 2,
        "F" | "Cl" | "Br" | "I" => 1,
        _ => return None,
    })
}

fn capitalise(symbol: &str) -> String {
    let mut out = symbol.to_string();
    out[..1].make_ascii_uppercase();
    out
}

fn organic_atom(token: &str) -> Option<Atom> {
    let (element, aromatic) = match token {
        "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I" => (token.to_string(), false),
        "b" | "c" | "n" | "o" | "p" | "s" => (token.to_ascii_uppercase(), true),
        _ => return None,
    };
    Some(Atom {
        element,
        aromatic,
        charge: 0,
        implicit_h: 0,
        degree: 0,
        bracket: false,
    })
}

/// Parses `[isotope? symbol H-count? charge?]`. Isotope labels are accepted
/// and ignored.
fn bracket_atom(token: &str, position: usize) -> Result<Atom, SmilesError> {
    let invalid = || err(SmilesErrorKind::InvalidBracketAtom(token.to_string()), position);
    let body = &token.as_bytes()[1..token.len() - 1];
    let mut i = 0;
    while i < body.len() && body[i].is_ascii_digit() {
        i += 1;
    }
    let start = i;
    if i >= body.len() || !body[i].is_ascii_alphabetic() {
        return invalid();
    }
    let inner = std::str::from_utf8(body).expect("ascii");
    let (element, aromatic) = if body[i].is_ascii_uppercase() {
        let two = inner.get(start..start + 2).filter(|s| {
            s.as_bytes()[1].is_ascii_lowercase() && ELEMENTS.contains(s)
        });
        let sym = two.unwrap_or(&inner[start..start + 1]);
        if !ELEMENTS.contains(&sym) {
            return err(SmilesErrorKind::UnknownAtom(sym.to_string()), position);
        }
        i += sym.len();
        (sym.to_string(), false)
    } else {
        let two = inner.get(start..start + 2).filter(|s| AROMATIC_BRACKET.contains(s));
        let sym = two.unwrap_or(&inner[start..start + 1]);
        if !AROMATIC_BRACKET.contains(&sym) {
            return err(SmilesErrorKind::UnknownAtom(sym.to_string()), position);
        }
        i += sym.len();
        (capitalise(sym), true)
    };
    if body.get(i) == Some(&b'@') {
        return err(SmilesErrorKind::Stereo, position);
    }
    let mut h = 0;
    if body.get(i) == Some(&b'H') {
        i += 1;
        h = 1;
        if let Some(d) = body.get(i).filter(|b| b.is_ascii_digit()) {
            h = u32::from(d - b'0');
            i += 1;
        }
    }
    let mut charge = 0i32;
    if let Some(&sign) = body.get(i).filter(|&&b| b == b'+' || b == b'-') {
        let unit = if sign == b'+' { 1 } else { -1 };
        i += 1;
        let mut magnitude = 1;
        if let Some(d) = body.get(i).filter(|b| b.is_ascii_digit()) {
            magnitude = i32::from(d - b'0');
            i += 1;
        } else {
            while body.get(i) == Some(&sign) {
                magnitude += 1;
                i += 1;
            }
        }
        charge = unit * magnitude;
    }
    if i != body.len() {
        return invalid();
    }
    Ok(Atom {
        element,
        aromatic,
        charge,
        implicit_h: h,
        degree: 0,
        bracket: true,
    })
}

struct OpenRing {
    atom: usize,
    bond: Option<BondOrder>,
}

/// Builds the molecular graph of a single-component SMILES string.
pub fn parse_smiles(s: &str) -> Result<MoleculeGraph, SmilesError> {
    let tokens = tokenize_with_offsets(s)?;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branches: Vec<usize> = Vec::new();
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut rings: HashMap<u32, OpenRing> = HashMap::new();
    let mut ring_closures = 0;
    let mut last_was_open = false;

    let add_bond = |bonds: &mut Vec<Bond>, atoms: &[Atom], a: usize, b: usize, order: Option<BondOrder>, pos| {
        if a == b {
            return err(SmilesErrorKind::SelfBond, pos);
        }
        let (a, b) = (a.min(b), a.max(b));
        if bonds.iter().any(|x| x.a == a && x.b == b) {
            return err(SmilesErrorKind::DuplicateBond, pos);
        }
        let order = order.unwrap_or(if atoms[a].aromatic && atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        bonds.push(Bond { a, b, order });
        Ok(())
    };

    for &(pos, tok) in &tokens {
        let first = tok.as_bytes()[0];
        let mut new_atom = false;
        match first {
            b'[' => {
                atoms.push(bracket_atom(tok, pos)?);
                new_atom = true;
            }
            b'(' => {
                let Some(p) = prev else {
                    return err(SmilesErrorKind::EmptyBranch, pos);
                };
                if pending.is_some() {
                    return err(SmilesErrorKind::DanglingBond, pos);
                }
                branches.push(p);
            }
            b')' => {
                if last_was_open {
                    return err(SmilesErrorKind::EmptyBranch, pos);
                }
                if pending.is_some() {
                    return err(SmilesErrorKind::DanglingBond, pos);
                }
                match branches.pop() {
                    Some(p) => prev = Some(p),
                    None => return err(SmilesErrorKind::UnbalancedParentheses, pos),
                }
            }
            b'-' | b'=' | b'#' | b':' => {
                if prev.is_none() || pending.is_some() {
                    return err(SmilesErrorKind::DanglingBond, pos);
                }
                pending = BondOrder::from_symbol(first).map(|o| (o, pos));
            }
            b'0'..=b'9' | b'%' => {
                let label: u32 = if first == b'%' {
                    tok[1..].parse().map_err(|_| SmilesError {
                        kind: SmilesErrorKind::MalformedRingClosure,
                        position: pos,
                    })?
                } else {
                    u32::from(first - b'0')
                };
                let Some(current) = prev else {
                    return err(SmilesErrorKind::DanglingBond, pos);
                };
                let bond = pending.take().map(|(o, _)| o);
                match rings.remove(&label) {
                    Some(open) => {
                        let order = match (open.bond, bond) {
                            (Some(x), Some(y)) if x != y => {
                                return err(SmilesErrorKind::ConflictingRingBond, pos)
                            }
                            (x, y) => x.or(y),
                        };
                        add_bond(&mut bonds, &atoms, open.atom, current, order, pos)?;
                        ring_closures += 1;
                    }
                    None => {
                        rings.insert(label, OpenRing { atom: current, bond });
                    }
                }
            }
            b'.' => return err(SmilesErrorKind::Disconnected, pos),
            b'/' | b'\\' | b'@' => return err(SmilesErrorKind::Stereo, pos),
            _ => match organic_atom(tok) {
                Some(atom) => {
                    atoms.push(atom);
                    new_atom = true;
                }
                None => return err(SmilesErrorKind::UnknownAtom(tok.to_string()), pos),
            },
        }
        if new_atom {
            let new = atoms.len() - 1;
            if let Some(p) = prev {
                let order = pending.take().map(|(o, _)| o);
                add_bond(&mut bonds, &atoms, p, new, order, pos)?;
            }
            prev = Some(new);
        }
        last_was_open = first == b'(';
    }

    if let Some((_, pos)) = pending {
        return err(SmilesErrorKind::DanglingBond, pos);
    }
    if !branches.is_empty() {
        return err(SmilesErrorKind::UnbalancedParentheses, s.len());
    }
    if let Some((&label, _)) = rings.iter().min_by_key(|(l, _)| **l) {
        return err(SmilesErrorKind::UnclosedRing(label), s.len());
    }
    if atoms.is_empty() {
        return err(SmilesErrorKind::Empty, 0);
    }

    let mut bond_sum = vec![0u32; atoms.len()];
    for b in &bonds {
        for end in [b.a, b.b] {
            atoms[end].degree += 1;
            bond_sum[end] += b.order.doubled();
        }
    }
    for (atom, doubled) in atoms.iter_mut().zip(bond_sum) {
        if !atom.bracket {
            let valence = default_valence(&atom.element).expect("organic subset");
            atom.implicit_h = valence.saturating_sub(doubled.div_ceil(2));
        }
    }

    let mut data = Vec::with_capacity(atoms.len() * FEATURE_DIM);
    for atom in &atoms {
        data.extend_from_slice(&atom_features(atom));
    }
    let atom_features = Tensor::matrix(atoms.len(), FEATURE_DIM, data).expect("feature matrix shape");
    Ok(MoleculeGraph {
        atoms,
        bonds,
        atom_features,
        ring_closures,
    })
}
