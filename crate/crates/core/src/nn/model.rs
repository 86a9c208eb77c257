use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{dense, gcn_layer, gin_layer, global_max_pool, residual_conv_block};
use super::{DrugBranch, DrugInput, ModelInput, ModelSpec, NnError};
use crate::mol::{TokenSeq, FEATURE_DIM};
use crate::task::Task;
use crate::tensor::{Tape, Tensor, Var};

/// Named parameters in construction order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    drug_vocab_size: usize,
    protein_vocab_size: usize,
    names: Vec<String>,
    params: Vec<Tensor>,
    index: HashMap<String, usize>,
}

struct Init {
    rng: ChaCha8Rng,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl Init {
    fn glorot(&mut self, name: String, shape: &[usize], fan_in: usize, fan_out: usize) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-limit..=limit)).collect();
        self.push(name, Tensor::new(shape.to_vec(), data).expect("shape and data agree"));
    }

    fn bias(&mut self, name: String, width: usize) {
        self.push(name, Tensor::zeros(&[width]));
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.names.push(name);
        self.params.push(t);
    }

    fn dense(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.glorot(format!("{prefix}.w"), &[d_in, d_out], d_in, d_out);
        self.bias(format!("{prefix}.b"), d_out);
    }

    fn conv_stack(&mut self, prefix: &str, blocks: usize, c_in: usize, c_out: usize, kernel: usize, residual: bool) {
        let mut width = c_in;
        for i in 0..blocks {
            let p = format!("{prefix}.conv{i}");
            self.glorot(format!("{p}.k"), &[kernel, width, c_out], kernel * width, kernel * c_out);
            self.bias(format!("{p}.b"), c_out);
            if residual && width != c_out {
                self.glorot(format!("{p}.proj"), &[1, width, c_out], width, c_out);
            }
            width = c_out;
        }
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tasks(&self) -> &[Task] {
        &self.spec.tasks
    }

    pub fn vocab_sizes(&self) -> (usize, usize) {
        (self.drug_vocab_size, self.protein_vocab_size)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Replaces every parameter; names and shapes must match the current
    /// layout.
    pub fn load_params(&mut self, named: Vec<(String, Tensor)>) -> Result<(), NnError> {
        if named.len() != self.params.len() {
            return Err(NnError::ParameterMismatch(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                named.len()
            )));
        }
        let mut fresh = self.params.clone();
        for (name, t) in named {
            let &i = self
                .index
                .get(&name)
                .ok_or_else(|| NnError::ParameterMismatch(format!("unknown parameter {name}")))?;
            if t.shape() != fresh[i].shape() {
                return Err(NnError::ParameterMismatch(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    fresh[i].shape(),
                    t.shape()
                )));
            }
            fresh[i] = t;
        }
        self.params = fresh;
        Ok(())
    }

    /// Registers every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone(), trainable)).collect()
    }

    fn var(&self, bound: &[Var], name: &str) -> Var {
        bound[self.index[name]]
    }

    fn opt_var(&self, bound: &[Var], name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| bound[i])
    }

    fn conv_stack(&self, tape: &mut Tape, bound: &[Var], prefix: &str, blocks: usize, mut x: Var) -> Result<Var, NnError> {
        for i in 0..blocks {
            let p = format!("{prefix}.conv{i}");
            let k = self.var(bound, &format!("{p}.k"));
            let b = self.var(bound, &format!("{p}.b"));
            let proj = self.opt_var(bound, &format!("{p}.proj"));
            x = residual_conv_block(tape, x, k, b, proj, self.spec.residual)?;
        }
        Ok(x)
    }

    fn sequence_branch(&self, tape: &mut Tape, bound: &[Var], prefix: &str, blocks: usize, seq: &TokenSeq) -> Result<Var, NnError> {
        if seq.true_len == 0 {
            return Err(NnError::EmptyPool);
        }
        // Only the unpadded prefix is embedded, so pad content never matters.
        let table = self.var(bound, &format!("{prefix}.embed"));
        let x = tape.gather(table, seq.tokens())?;
        let x = self.conv_stack(tape, bound, prefix, blocks, x)?;
        global_max_pool(tape, x, seq.true_len)
    }

    /// Pooled drug representation of width `conv_channels`.
    pub fn drug_embedding(&self, tape: &mut Tape, bound: &[Var], drug: &DrugInput) -> Result<Var, NnError> {
        match (self.spec.drug_branch, drug) {
            (DrugBranch::Cnn, DrugInput::Tokens(seq)) => {
                self.sequence_branch(tape, bound, "drug", self.spec.drug_depth, seq)
            }
            (DrugBranch::Gcn, DrugInput::Graph(g)) => {
                let edges = g.edges();
                let mut h = tape.constant(g.atom_features.clone());
                for i in 0..self.spec.drug_depth {
                    let w = self.var(bound, &format!("drug.gcn{i}.w"));
                    h = gcn_layer(tape, h, &edges, w)?;
                }
                global_max_pool(tape, h, g.n_atoms())
            }
            (DrugBranch::Gin, DrugInput::Graph(g)) => {
                let edges = g.edges();
                let mut h = tape.constant(g.atom_features.clone());
                for i in 0..self.spec.drug_depth {
                    let p = format!("drug.gin{i}");
                    let (w1, b1) = (self.var(bound, &format!("{p}.w1")), self.var(bound, &format!("{p}.b1")));
                    let (w2, b2) = (self.var(bound, &format!("{p}.w2")), self.var(bound, &format!("{p}.b2")));
                    let mlp = |tape: &mut Tape, x: Var| -> Result<Var, NnError> {
                        let x = dense(tape, x, w1, b1)?;
                        let x = tape.relu(x)?;
                        dense(tape, x, w2, b2)
                    };
                    h = gin_layer(tape, h, &edges, mlp, self.spec.gin_epsilon)?;
                    h = tape.relu(h)?;
                }
                global_max_pool(tape, h, g.n_atoms())
            }
            _ => Err(NnError::BranchMismatch),
        }
    }

    pub fn protein_embedding(&self, tape: &mut Tape, bound: &[Var], protein: &TokenSeq) -> Result<Var, NnError> {
        self.sequence_branch(tape, bound, "protein", self.spec.protein_conv_blocks, protein)
    }

    /// One `[batch]` output per task, in head order.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], batch: &[&ModelInput]) -> Result<Vec<Var>, NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let width = 2 * self.spec.conv_channels;
        let mut rows = Vec::with_capacity(batch.len());
        for input in batch {
            let d = self.drug_embedding(tape, bound, &input.drug)?;
            let p = self.protein_embedding(tape, bound, &input.protein)?;
            let joint = tape.concat(&[d, p], 0)?;
            rows.push(tape.reshape(joint, &[1, width])?);
        }
        let x = tape.concat(&rows, 0)?;
        let h = dense(tape, x, self.var(bound, "trunk.fc1.w"), self.var(bound, "trunk.fc1.b"))?;
        let h = tape.relu(h)?;
        let h = dense(tape, h, self.var(bound, "trunk.fc2.w"), self.var(bound, "trunk.fc2.b"))?;
        let h = tape.relu(h)?;
        let mut outputs = Vec::with_capacity(self.spec.tasks.len());
        for &task in &self.spec.tasks {
            let w = self.var(bound, &format!("head.{task}.w"));
            let b = self.var(bound, &format!("head.{task}.b"));
            let y = dense(tape, h, w, b)?;
            let y = tape.reshape(y, &[batch.len()])?;
            outputs.push(if task.is_bounded() { tape.sigmoid(y)? } else { y });
        }
        Ok(outputs)
    }

    /// Predictions indexed as `[task][record]`.
    pub fn predict(&self, batch: &[ModelInput]) -> Result<Vec<Vec<f64>>, NnError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let refs: Vec<&ModelInput> = batch.iter().collect();
        let outs = self.forward(&mut tape, &bound, &refs)?;
        Ok(outs.into_iter().map(|v| tape.value(v).data().to_vec()).collect())
    }
}

/// Glorot-uniform weights and zero biases, drawn in construction order from a
/// ChaCha8 stream seeded with `seed`.
pub fn build_model(spec: &ModelSpec, drug_vocab_size: usize, protein_vocab_size: usize, seed: u64) -> Result<Model, NnError> {
    spec.validate()?;
    if protein_vocab_size < 3 || (spec.drug_branch == DrugBranch::Cnn && drug_vocab_size < 3) {
        return Err(NnError::InvalidSpec("vocabularies need at least one token besides pad and unknown".into()));
    }
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
        names: Vec::new(),
        params: Vec::new(),
    };
    let (e, c, h) = (spec.embed_dim, spec.conv_channels, spec.hidden_dim);
    match spec.drug_branch {
        DrugBranch::Cnn => {
            init.glorot("drug.embed".into(), &[drug_vocab_size, e], drug_vocab_size, e);
            init.conv_stack("drug", spec.drug_depth, e, c, spec.drug_kernel, spec.residual);
        }
        DrugBranch::Gcn => {
            let mut width = FEATURE_DIM;
            for i in 0..spec.drug_depth {
                init.glorot(format!("drug.gcn{i}.w"), &[width, c], width, c);
                width = c;
            }
        }
        DrugBranch::Gin => {
            let mut width = FEATURE_DIM;
            for i in 0..spec.drug_depth {
                let p = format!("drug.gin{i}");
                init.glorot(format!("{p}.w1"), &[width, c], width, c);
                init.bias(format!("{p}.b1"), c);
                init.glorot(format!("{p}.w2"), &[c, c], c, c);
                init.bias(format!("{p}.b2"), c);
                width = c;
            }
        }
    }
    init.glorot("protein.embed".into(), &[protein_vocab_size, e], protein_vocab_size, e);
    init.conv_stack("protein", spec.protein_conv_blocks, e, c, spec.protein_kernel, spec.residual);
    init.dense("trunk.fc1", 2 * c, h);
    init.dense("trunk.fc2", h, h);
    for task in &spec.tasks {
        init.dense(&format!("head.{task}"), h, 1);
    }
    let index = init.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    Ok(Model {
        spec: spec.clone(),
        drug_vocab_size,
        protein_vocab_size,
        names: init.names,
        params: init.params,
        index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Gcn3,
    Gin5,
}

/// Single-task graph model with one regression head on `target`.
pub fn build_singletask_baseline(
    kind: BaselineKind,
    target: Task,
    drug_vocab_size: usize,
    protein_vocab_size: usize,
    seed: u64,
) -> Result<Model, NnError> {
    let name = match kind {
        BaselineKind::Gcn3 => "gcn3",
        BaselineKind::Gin5 => "gin5",
    };
    let spec = ModelSpec::named(name)?.with_tasks(&[target]);
    build_model(&spec, drug_vocab_size, protein_vocab_size, seed)
}
