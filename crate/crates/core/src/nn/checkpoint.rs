//! Checkpoint directories.
//!
//! ```text
//! manifest.json      spec, seed, task order, vocabulary sizes, lengths
//! params.bin         named tensor blocks
//! drug_vocab.txt
//! protein_vocab.txt
//! ```
//!
//! A block file starts with the magic `MLTLEBLK` and a `u32` block count.
//! Each block is `u32` name length, UTF-8 name, `u32` rank, `u64` extents and
//! row-major `f64` values, all little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, DrugBranch, Encoder, Model, ModelSpec, NnError};
use crate::mol::{Vocab, VocabKind};
use crate::task::Task;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MLTLEBLK";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_blocks(path: &Path, blocks: &[(&str, &Tensor)]) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, t) in blocks {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_blocks(path: &Path) -> Result<Vec<(String, Tensor)>, NnError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(NnError::Corrupt("bad magic".into()));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| NnError::Corrupt("name is not UTF-8".into()))?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| NnError::Corrupt(format!("{name}: shape overflows")))?;
        let raw = c.take(n.checked_mul(8).ok_or_else(|| NnError::Corrupt("size overflow".into()))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::new(shape, data).map_err(|e| NnError::Corrupt(format!("{name}: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(NnError::Corrupt("trailing bytes".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub tasks: Vec<Task>,
    pub drug_vocab_size: usize,
    pub protein_vocab_size: usize,
    pub max_drug_len: usize,
    pub max_protein_len: usize,
    pub parameter_count: usize,
}

/// A model together with the encoder it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub encoder: Encoder,
    pub seed: u64,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), NnError> {
        fs::create_dir_all(dir)?;
        let (drug_vocab_size, protein_vocab_size) = self.model.vocab_sizes();
        let manifest = CheckpointManifest {
            format_version: FORMAT_VERSION,
            spec: self.model.spec().clone(),
            seed: self.seed,
            tasks: self.model.tasks().to_vec(),
            drug_vocab_size,
            protein_vocab_size,
            max_drug_len: self.encoder.max_drug_len,
            max_protein_len: self.encoder.max_protein_len,
            parameter_count: self.model.parameter_count(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        let blocks: Vec<(&str, &Tensor)> = self
            .model
            .names()
            .iter()
            .map(String::as_str)
            .zip(self.model.params())
            .collect();
        write_blocks(&dir.join("params.bin"), &blocks)?;
        self.encoder.drug_vocab.save(&dir.join("drug_vocab.txt"))?;
        self.encoder.protein_vocab.save(&dir.join("protein_vocab.txt"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, NnError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(NnError::Corrupt(format!("unsupported format version {}", manifest.format_version)));
        }
        if manifest.tasks != manifest.spec.tasks {
            return Err(NnError::Corrupt("task order disagrees with the spec".into()));
        }
        let drug_vocab = Vocab::load(VocabKind::Drug, &dir.join("drug_vocab.txt"))?;
        let protein_vocab = Vocab::load(VocabKind::Protein, &dir.join("protein_vocab.txt"))?;
        if drug_vocab.size() != manifest.drug_vocab_size || protein_vocab.size() != manifest.protein_vocab_size {
            return Err(NnError::VocabMismatch {
                expected: (manifest.drug_vocab_size, manifest.protein_vocab_size),
                found: (drug_vocab.size(), protein_vocab.size()),
            });
        }
        let mut model = build_model(&manifest.spec, manifest.drug_vocab_size, manifest.protein_vocab_size, manifest.seed)?;
        model.load_params(read_blocks(&dir.join("params.bin"))?)?;
        let branch: DrugBranch = manifest.spec.drug_branch;
        Ok(Self {
            model,
            encoder: Encoder {
                drug_vocab,
                protein_vocab,
                branch,
                max_drug_len: manifest.max_drug_len,
                max_protein_len: manifest.max_protein_len,
            },
            seed: manifest.seed,
        })
    }
}
