//! Dense `f64` tensors and a reverse-mode autodiff tape.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles during a
//! forward pass. Calling [`Tape::backward`] on a scalar output walks the record
//! in reverse and returns the gradient of that output with respect to every
//! leaf that was registered with `requires_grad`.
//!
//! Tensors are row-major. Shapes are lists of positive extents; the empty
//! shape denotes a scalar.

mod gradcheck;
mod ops;

pub use gradcheck::grad_check;
pub use ops::{ElementwiseKind, Padding, ReduceKind};

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} does not hold {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for axis of length {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("reduction over an empty axis")]
    EmptyReduction,
    #[error("axis {axis} invalid for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("kernel of length {kernel} longer than input of length {input} under valid padding")]
    KernelTooLong { kernel: usize, input: usize },
    #[error("{op}: missing required operand")]
    MissingOperand { op: &'static str },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("variable does not belong to this tape")]
    DetachedOutput,
    #[error("grad_check: function is not finite at a perturbed point")]
    NonFiniteProbe,
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array of 64-bit floats.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn tape_id(&self) -> u64 {
        self.tape
    }
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: ops::Op,
}

/// Ordered record of operations. Nodes are appended as they are computed, so
/// every node's inputs precede it.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf value. Gradients are returned for leaves created with
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, ops::Op::Leaf)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        assert_eq!(var.tape, self.id, "variable from a different tape");
        &self.nodes[var.index].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.index].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: ops::Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn check(&self, var: Var) -> Result<&Tensor> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(TensorError::DetachedOutput);
        }
        Ok(&self.nodes[var.index].value)
    }

    /// Reverse pass from a scalar output. Consumes the tape.
    ///
    /// Every `requires_grad` leaf receives an entry, zero-filled when the
    /// output does not depend on it.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out = self.check(output)?;
        if !out.is_scalar() {
            return Err(TensorError::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[output.index].requires_grad {
            grads[output.index] = Some(Tensor::from_parts(out.shape.clone(), vec![1.0]));
        }
        for index in (0..=output.index).rev() {
            let node = &self.nodes[index];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[index].take() else {
                continue;
            };
            if matches!(node.op, ops::Op::Leaf) {
                grads[index] = Some(upstream);
                continue;
            }
            for (input, contribution) in ops::backward_rule(&self.nodes, node, &upstream) {
                if !self.nodes[input.index].requires_grad {
                    continue;
                }
                match &mut grads[input.index] {
                    Some(acc) => {
                        for (a, c) in acc.data.iter_mut().zip(contribution.data.iter()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        let mut by_leaf = HashMap::new();
        for (index, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, ops::Op::Leaf) {
                let g = grads[index]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                by_leaf.insert(index, g);
            }
        }
        Ok(Gradients {
            tape: self.id,
            by_leaf,
        })
    }
}

/// Gradients of one backward pass, keyed by leaf variable.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    by_leaf: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.by_leaf.get(&var.index)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.by_leaf.remove(&var.index)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

#[cfg(test)]
mod tests;
