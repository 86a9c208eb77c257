use super::{DrugBranch, NnError};
use crate::data::DtaRecord;
use crate::mol::{encode_sequence, parse_smiles, MoleculeGraph, TokenSeq, Vocab, VocabKind};

#[derive(Clone, Debug, PartialEq)]
pub enum DrugInput {
    Tokens(TokenSeq),
    Graph(MoleculeGraph),
}

/// One encoded drug-target pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub drug: DrugInput,
    pub protein: TokenSeq,
}

/// Vocabularies and length limits that turn raw pairs into model inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub drug_vocab: Vocab,
    pub protein_vocab: Vocab,
    pub branch: DrugBranch,
    pub max_drug_len: usize,
    pub max_protein_len: usize,
}

impl Encoder {
    /// Builds both vocabularies from `records` (normally the training
    /// partition).
    pub fn fit(
        records: &[DtaRecord],
        branch: DrugBranch,
        max_drug_len: usize,
        max_protein_len: usize,
    ) -> Result<Self, NnError> {
        if max_drug_len == 0 || max_protein_len == 0 {
            return Err(NnError::InvalidSpec("maximum lengths must be positive".into()));
        }
        let drug_vocab = Vocab::build(VocabKind::Drug, records.iter().map(|r| r.smiles.as_str()))?;
        let protein_vocab = Vocab::build(VocabKind::Protein, records.iter().map(|r| r.protein.as_str()))?;
        Ok(Self {
            drug_vocab,
            protein_vocab,
            branch,
            max_drug_len,
            max_protein_len,
        })
    }

    pub fn encode(&self, smiles: &str, protein: &str) -> Result<ModelInput, NnError> {
        // Parsed for every branch so malformed SMILES never reach the model.
        let graph = parse_smiles(smiles)?;
        let drug = match self.branch {
            DrugBranch::Cnn => DrugInput::Tokens(encode_sequence(smiles, &self.drug_vocab, self.max_drug_len)?),
            DrugBranch::Gcn | DrugBranch::Gin => DrugInput::Graph(graph),
        };
        let protein = encode_sequence(protein, &self.protein_vocab, self.max_protein_len)?;
        Ok(ModelInput { drug, protein })
    }

    pub fn encode_record(&self, record: &DtaRecord) -> Result<ModelInput, NnError> {
        self.encode(&record.smiles, &record.protein)
    }

    pub fn encode_all(&self, records: &[DtaRecord]) -> Result<Vec<ModelInput>, NnError> {
        records.iter().map(|r| self.encode_record(r)).collect()
    }
}
