use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::smiles::{tokenize_smiles, SmilesError};
use super::PROTEIN_ALPHABET;

pub const PAD_INDEX: usize = 0;
pub const UNKNOWN_INDEX: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Drug,
    Protein,
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("empty sequence")]
    Empty,
    #[error("max_len must be positive")]
    ZeroLength,
    #[error("invalid residue {residue:?} at position {position}")]
    InvalidResidue { residue: char, position: usize },
    #[error(transparent)]
    Smiles(#[from] SmilesError),
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-to-index map. Index 0 pads, index 1 stands for tokens not seen when
/// the vocabulary was built, and known tokens follow from 2 in first-seen
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    kind: VocabKind,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(kind: VocabKind) -> Self {
        Self {
            kind,
            tokens: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    /// Vocabulary size including the two reserved indices.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.size();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNKNOWN_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        match index {
            PAD_INDEX => Some(PAD_TOKEN),
            UNKNOWN_INDEX => Some(UNKNOWN_TOKEN),
            i => self.tokens.get(i - 2).map(String::as_str),
        }
    }

    /// Builds a vocabulary over training sequences.
    pub fn build<'a, I>(kind: VocabKind, sequences: I) -> Result<Self, EncodeError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Self::new(kind);
        for seq in sequences {
            for tok in split_tokens(kind, seq)? {
                vocab.insert(tok);
            }
        }
        Ok(vocab)
    }

    /// Two tab-separated columns, token then index, sorted by index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size() {
            let _ = writeln!(out, "{}\t{}", self.token(i).expect("in range"), i);
        }
        out
    }

    pub fn from_text(kind: VocabKind, text: &str) -> Result<Self, VocabError> {
        let mut vocab = Self::new(kind);
        for (n, line) in text.lines().enumerate() {
            let malformed = |message: &str| VocabError::Malformed {
                line: n + 1,
                message: message.to_string(),
            };
            let (token, index) = line.rsplit_once('\t').ok_or_else(|| malformed("expected two columns"))?;
            let index: usize = index.parse().map_err(|_| malformed("index is not an integer"))?;
            if index != n {
                return Err(malformed("indices must be contiguous from 0"));
            }
            match index {
                PAD_INDEX | UNKNOWN_INDEX => {}
                _ => {
                    if vocab.insert(token) != index {
                        return Err(malformed("duplicate token"));
                    }
                }
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(kind: VocabKind, path: &Path) -> Result<Self, VocabError> {
        Self::from_text(kind, &std::fs::read_to_string(path)?)
    }
}

fn split_tokens(kind: VocabKind, seq: &str) -> Result<Vec<&str>, EncodeError> {
    if seq.is_empty() {
        return Err(EncodeError::Empty);
    }
    match kind {
        VocabKind::Drug => Ok(tokenize_smiles(seq)?),
        VocabKind::Protein => seq
            .char_indices()
            .map(|(position, residue)| {
                if PROTEIN_ALPHABET.contains(residue) {
                    Ok(&seq[position..position + 1])
                } else {
                    Err(EncodeError::InvalidResidue { residue, position })
                }
            })
            .collect(),
    }
}

/// Fixed-length index sequence; positions from `true_len` on hold the pad
/// index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    pub indices: Vec<usize>,
    pub true_len: usize,
    pub vocab: VocabKind,
}

impl TokenSeq {
    /// The unpadded prefix.
    pub fn tokens(&self) -> &[usize] {
        &self.indices[..self.true_len]
    }
}

/// Maps a drug SMILES or protein sequence to indices, truncating to `max_len`
/// and padding with zeros.
pub fn encode_sequence(seq: &str, vocab: &Vocab, max_len: usize) -> Result<TokenSeq, EncodeError> {
    if max_len == 0 {
        return Err(EncodeError::ZeroLength);
    }
    let tokens = split_tokens(vocab.kind(), seq)?;
    let mut indices: Vec<usize> = tokens.iter().take(max_len).map(|t| vocab.index_of(t)).collect();
    let true_len = indices.len();
    indices.resize(max_len, PAD_INDEX);
    Ok(TokenSeq {
        indices,
        true_len,
        vocab: vocab.kind(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protein_encoding() {
        let vocab = Vocab::build(VocabKind::Protein, ["MKT"]).unwrap();
        assert_eq!(vocab.index_of("M"), 2);
        assert_eq!(vocab.index_of("T"), 4);
        let seq = encode_sequence("MKT", &vocab, 5).unwrap();
        assert_eq!(seq.indices, vec![2, 3, 4, 0, 0]);
        assert_eq!(seq.true_len, 3);
    }

    #[test]
    fn drug_encoding_and_unknowns() {
        let vocab = Vocab::build(VocabKind::Drug, ["CCO"]).unwrap();
        let seq = encode_sequence("CCO", &vocab, 4).unwrap();
        assert_eq!(seq.indices, vec![2, 2, 3, 0]);
        let seq = encode_sequence("CCl", &vocab, 4).unwrap();
        assert_eq!(seq.indices, vec![2, 1, 0, 0]);
    }

    #[test]
    fn truncation() {
        let vocab = Vocab::build(VocabKind::Protein, ["MKTAY"]).unwrap();
        let seq = encode_sequence("MKTAY", &vocab, 3).unwrap();
        assert_eq!(seq.indices, vec![2, 3, 4]);
        assert_eq!(seq.tokens(), &[2, 3, 4]);
    }

    #[test]
    fn encoding_errors() {
        let vocab = Vocab::new(VocabKind::Protein);
        assert!(matches!(encode_sequence("", &vocab, 4), Err(EncodeError::Empty)));
        assert!(matches!(encode_sequence("MK", &vocab, 0), Err(EncodeError::ZeroLength)));
        assert!(matches!(
            encode_sequence("MKB", &vocab, 4),
            Err(EncodeError::InvalidResidue { residue: 'B', position: 2 })
        ));
        let drugs = Vocab::new(VocabKind::Drug);
        assert!(matches!(encode_sequence("C[N", &drugs, 4), Err(EncodeError::Smiles(_))));
    }

    #[test]
    fn text_round_trip() {
        let vocab = Vocab::build(VocabKind::Drug, ["CC(=O)Cl", "c1ccccc1[NH3+]"]).unwrap();
        let text = vocab.to_text();
        assert!(text.starts_with("<pad>\t0\n<unk>\t1\nC\t2\n"));
        assert_eq!(Vocab::from_text(VocabKind::Drug, &text).unwrap(), vocab);
        assert!(Vocab::from_text(VocabKind::Drug, "<pad>\t0\nC\t3\n").is_err());
    }
}
