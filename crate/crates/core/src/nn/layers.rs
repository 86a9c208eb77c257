//! Building blocks shared by the drug and protein branches.

use std::collections::BTreeSet;

use super::NnError;
use crate::tensor::{Padding, ReduceKind, Tape, Var};

/// `x W + b` for `x: [n x d_in]`, `W: [d_in x d_out]`, `b: [d_out]`.
pub fn dense(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var, NnError> {
    let xw = tape.matmul(x, weight)?;
    Ok(tape.add_bias(xw, bias)?)
}

/// Neighbour lists for `n` nodes, deduplicated and sorted.
fn neighbours(n: usize, edges: &[(usize, usize)]) -> Result<Vec<BTreeSet<usize>>, NnError> {
    if n == 0 {
        return Err(NnError::EmptyGraph);
    }
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(NnError::EdgeOutOfRange { edge: (a, b), n });
        }
        adj[a].insert(b);
        adj[b].insert(a);
    }
    Ok(adj)
}

/// Rows of `D^-1/2 (A + I) D^-1/2` as `(column, weight)` lists, with `D` the
/// degree matrix of `A + I`.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<(usize, f64)>>, NnError> {
    let adj = neighbours(n, edges)?;
    let inv_sqrt: Vec<f64> = adj.iter().map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt()).collect();
    Ok(adj
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            std::iter::once(i)
                .chain(nb.iter().copied())
                .map(|j| (j, inv_sqrt[i] * inv_sqrt[j]))
                .collect()
        })
        .collect())
}

/// Rows of `(1 + ε) I + A`.
pub fn gin_aggregation(n: usize, edges: &[(usize, usize)], epsilon: f64) -> Result<Vec<Vec<(usize, f64)>>, NnError> {
    let adj = neighbours(n, edges)?;
    Ok(adj
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            std::iter::once((i, 1.0 + epsilon))
                .chain(nb.iter().map(|&j| (j, 1.0)))
                .collect()
        })
        .collect())
}

/// Graph convolution: `ReLU(Â H W)`.
pub fn gcn_layer(tape: &mut Tape, node_feats: Var, edges: &[(usize, usize)], weights: Var) -> Result<Var, NnError> {
    let n = tape.value(node_feats).shape()[0];
    let a_hat = normalized_adjacency(n, edges)?;
    let hw = tape.matmul(node_feats, weights)?;
    let agg = tape.sparse_rows(a_hat, hw)?;
    Ok(tape.relu(agg)?)
}

/// Graph isomorphism layer: `h'_v = MLP((1 + ε) h_v + Σ_{u ∈ N(v)} h_u)`.
pub fn gin_layer<F>(
    tape: &mut Tape,
    node_feats: Var,
    edges: &[(usize, usize)],
    mlp: F,
    epsilon: f64,
) -> Result<Var, NnError>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var, NnError>,
{
    let n = tape.value(node_feats).shape()[0];
    let summed = tape.sparse_rows(gin_aggregation(n, edges, epsilon)?, node_feats)?;
    mlp(tape, summed)
}

/// `ReLU(conv(x) + b) + skip(x)`, where `skip` is the identity or, when the
/// width changes, a width-1 convolution. Without `residual` only the
/// convolution path remains.
pub fn residual_conv_block(
    tape: &mut Tape,
    seq_feats: Var,
    kernel: Var,
    bias: Var,
    projection: Option<Var>,
    residual: bool,
) -> Result<Var, NnError> {
    let conv = tape.conv1d(seq_feats, kernel, Padding::Same)?;
    let conv = tape.add_bias(conv, bias)?;
    let activated = tape.relu(conv)?;
    if !residual {
        return Ok(activated);
    }
    let skip = match projection {
        Some(p) => tape.conv1d(seq_feats, p, Padding::Same)?,
        None => seq_feats,
    };
    Ok(tape.add(activated, skip)?)
}

/// Coordinate-wise maximum over the first `true_len` rows.
pub fn global_max_pool(tape: &mut Tape, feats: Var, true_len: usize) -> Result<Var, NnError> {
    if true_len == 0 {
        return Err(NnError::EmptyPool);
    }
    let rows = tape.slice_rows(feats, 0, true_len)?;
    Ok(tape.reduce(ReduceKind::Max, rows, Some(0))?)
}
