//! SMILES parsing, atom featurisation and sequence encoding.

mod features;
mod smiles;
mod vocab;

pub use features::{atom_features, FEATURE_DIM};
pub use smiles::{
    parse_smiles, tokenize_smiles, Atom, Bond, BondOrder, MoleculeGraph, SmilesError, SmilesErrorKind,
};
pub use vocab::{encode_sequence, EncodeError, TokenSeq, Vocab, VocabError, VocabKind, PAD_INDEX, UNKNOWN_INDEX};

/// The 20 standard amino acids plus `X`.
pub const PROTEIN_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYX";

pub fn is_valid_protein(seq: &str) -> bool {
    !seq.is_empty() && seq.bytes().all(|b| PROTEIN_ALPHABET.as_bytes().contains(&b))
}
