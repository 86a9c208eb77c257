use super::{Node, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Ln,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Zero padding that keeps the length; an even kernel gets the extra
    /// zero on the right.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum UnaryKind {
    Relu,
    Sigmoid,
    Tanh,
    Ln,
}

pub(super) enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Unary {
        kind: UnaryKind,
        a: Var,
    },
    Scale {
        a: Var,
        factor: f64,
    },
    Clamp {
        a: Var,
        lo: f64,
        hi: f64,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Conv1d {
        input: Var,
        kernel: Var,
        pad_left: usize,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Reduce {
        kind: ReduceKind,
        input: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
        argmax: Vec<usize>,
    },
    SliceRows {
        input: Var,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape {
        input: Var,
    },
    Column {
        input: Var,
        col: usize,
    },
    SparseRows {
        input: Var,
        rows: Vec<Vec<(usize, f64)>>,
    },
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn record(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        Ok(self.push(value, requires_grad, op))
    }

    /// Dispatches on `kind`. Binary kinds require `b`.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = |b: Option<Var>, op| b.ok_or(TensorError::MissingOperand { op });
        match kind {
            ElementwiseKind::Add => self.binary(BinaryKind::Add, a, need_b(b, "add")?),
            ElementwiseKind::Sub => self.binary(BinaryKind::Sub, a, need_b(b, "sub")?),
            ElementwiseKind::Mul => self.binary(BinaryKind::Mul, a, need_b(b, "mul")?),
            ElementwiseKind::Relu => self.unary(UnaryKind::Relu, a),
            ElementwiseKind::Sigmoid => self.unary(UnaryKind::Sigmoid, a),
            ElementwiseKind::Tanh => self.unary(UnaryKind::Tanh, a),
            ElementwiseKind::Ln => self.unary(UnaryKind::Ln, a),
            ElementwiseKind::Scale(f) => self.scale(a, f),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Ln, a)
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let broadcast = if ta.shape == tb.shape {
            false
        } else if is_trailing_singleton(ta.shape(), tb.shape()) {
            true
        } else {
            return Err(TensorError::ShapeMismatch {
                op: name,
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        };
        let width = if broadcast { *ta.shape.last().unwrap() } else { 1 };
        let f = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Mul => |x: f64, y: f64| x * y,
        };
        let data = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data[i / width]))
            .collect();
        let value = Tensor::from_parts(ta.shape.clone(), data);
        self.record(name, value, &[a, b], Op::Binary { kind, a, b, broadcast })
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (name, f): (&'static str, fn(f64) -> f64) = match kind {
            UnaryKind::Relu => ("relu", |x| if x > 0.0 { x } else { 0.0 }),
            UnaryKind::Sigmoid => ("sigmoid", sigmoid),
            UnaryKind::Tanh => ("tanh", f64::tanh),
            UnaryKind::Ln => ("ln", f64::ln),
        };
        let value = Tensor::from_parts(ta.shape.clone(), ta.data.iter().map(|&x| f(x)).collect());
        self.record(name, value, &[a], Op::Unary { kind, a })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ta = self.check(a)?;
        let value = Tensor::from_parts(ta.shape.clone(), ta.data.iter().map(|x| x * factor).collect());
        self.record("scale", value, &[a], Op::Scale { a, factor })
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let ta = self.check(a)?;
        let value = Tensor::from_parts(ta.shape.clone(), ta.data.iter().map(|x| x.clamp(lo, hi)).collect());
        self.record("clamp", value, &[a], Op::Clamp { a, lo, hi })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = matmul_raw(&ta.data, &tb.data, m, k, n);
        let value = Tensor::from_parts(vec![m, n], data);
        self.record("matmul", value, &[a, b], Op::MatMul { a, b })
    }

    /// `out[i] = Σ w · input[j]` over the `(j, w)` entries of `rows[i]`, for a
    /// `[n x d]` input. Each output coordinate sums its terms in ascending
    /// value order, so relabeling the input rows (and the indices in `rows`
    /// to match) permutes the output rows without changing any bit.
    pub fn sparse_rows(&mut self, rows: Vec<Vec<(usize, f64)>>, input: Var) -> Result<Var> {
        let t = self.check(input)?;
        if t.rank() != 2 {
            return Err(TensorError::InvalidAxis { axis: 1, rank: t.rank() });
        }
        let (n, d) = (t.shape[0], t.shape[1]);
        if let Some(&(j, _)) = rows.iter().flatten().find(|(j, _)| *j >= n) {
            return Err(TensorError::IndexOutOfRange { index: j, bound: n });
        }
        let mut data = vec![0.0; rows.len() * d];
        let mut terms = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for c in 0..d {
                terms.clear();
                terms.extend(row.iter().map(|&(j, w)| w * t.data[j * d + c]));
                terms.sort_by(f64::total_cmp);
                data[i * d + c] = terms.iter().sum();
            }
        }
        let value = Tensor::from_parts(vec![rows.len(), d], data);
        self.record("sparse_rows", value, &[input], Op::SparseRows { input, rows })
    }

    /// Adds a bias vector to every row of a `[n x d]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.check(x)?, self.check(bias)?);
        if tx.rank() != 2 || tb.rank() != 1 || tx.shape[1] != tb.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: tx.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let d = tb.shape[0];
        let data = tx.data.iter().enumerate().map(|(i, v)| v + tb.data[i % d]).collect();
        let value = Tensor::from_parts(tx.shape.clone(), data);
        self.record("add_bias", value, &[x, bias], Op::AddBias { x, bias })
    }

    /// 1-D cross-correlation of `[len x ch_in]` with `[k x ch_in x ch_out]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, padding: Padding) -> Result<Var> {
        let (ti, tk) = (self.check(input)?, self.check(kernel)?);
        if ti.rank() != 2 || tk.rank() != 3 || ti.shape[1] != tk.shape[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                left: ti.shape.clone(),
                right: tk.shape.clone(),
            });
        }
        let (len, cin) = (ti.shape[0], ti.shape[1]);
        let (k, cout) = (tk.shape[0], tk.shape[2]);
        let (out_len, pad_left) = match padding {
            Padding::Valid => {
                if k > len {
                    return Err(TensorError::KernelTooLong { kernel: k, input: len });
                }
                (len - k + 1, 0)
            }
            Padding::Same => (len, (k - 1) / 2),
        };
        let mut out = vec![0.0; out_len * cout];
        for t in 0..out_len {
            let row = &mut out[t * cout..(t + 1) * cout];
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad_left).filter(|&s| s < len) else {
                    continue;
                };
                for c in 0..cin {
                    let x = ti.data[src * cin + c];
                    if x == 0.0 {
                        continue;
                    }
                    let w = &tk.data[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                    for (o, wv) in row.iter_mut().zip(w) {
                        *o += x * wv;
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![out_len, cout], out);
        self.record(
            "conv1d",
            value,
            &[input, kernel],
            Op::Conv1d {
                input,
                kernel,
                pad_left,
            },
        )
    }

    /// Gathers slices of `table` along its first axis.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tt = self.check(table)?;
        if tt.rank() == 0 {
            return Err(TensorError::InvalidAxis { axis: 0, rank: 0 });
        }
        if indices.is_empty() {
            return Err(TensorError::EmptyReduction);
        }
        let rows = tt.shape[0];
        let width: usize = tt.shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange { index: i, bound: rows });
            }
            data.extend_from_slice(&tt.data[i * width..(i + 1) * width]);
        }
        let mut shape = tt.shape.clone();
        shape[0] = indices.len();
        let value = Tensor::from_parts(shape, data);
        self.record(
            "gather",
            value,
            &[table],
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        )
    }

    /// Embedding lookup: row `i` of the output is row `indices[i]` of `table`.
    pub fn embedding_gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        self.gather(table, indices)
    }

    /// Reduces along `axis`, or over every element when `axis` is `None`.
    /// Max keeps the lowest index among ties.
    pub fn reduce(&mut self, kind: ReduceKind, input: Var, axis: Option<usize>) -> Result<Var> {
        let ti = self.check(input)?;
        let (outer, axis_len, inner, shape) = match axis {
            None => (1, ti.len(), 1, Vec::new()),
            Some(ax) => {
                if ax >= ti.rank() {
                    return Err(TensorError::InvalidAxis { axis: ax, rank: ti.rank() });
                }
                let outer = ti.shape[..ax].iter().product();
                let inner = ti.shape[ax + 1..].iter().product();
                let mut shape = ti.shape.clone();
                shape.remove(ax);
                (outer, ti.shape[ax], inner, shape)
            }
        };
        if axis_len == 0 {
            return Err(TensorError::EmptyReduction);
        }
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if kind == ReduceKind::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * axis_len * inner + k * inner + i;
                let slot = o * inner + i;
                match kind {
                    ReduceKind::Sum | ReduceKind::Mean => {
                        let s: f64 = (0..axis_len).map(|k| ti.data[at(k)]).sum();
                        out[slot] = if kind == ReduceKind::Mean { s / axis_len as f64 } else { s };
                    }
                    ReduceKind::Max => {
                        let mut best = at(0);
                        for k in 1..axis_len {
                            if ti.data[at(k)] > ti.data[best] {
                                best = at(k);
                            }
                        }
                        out[slot] = ti.data[best];
                        argmax[slot] = best;
                    }
                }
            }
        }
        let value = Tensor::from_parts(shape, out);
        self.record(
            "reduce",
            value,
            &[input],
            Op::Reduce {
                kind,
                input,
                outer,
                axis_len,
                inner,
                argmax,
            },
        )
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        self.reduce(ReduceKind::Sum, input, None)
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        self.reduce(ReduceKind::Mean, input, None)
    }

    /// Rows `start..start + len` along the first axis.
    pub fn slice_rows(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let ti = self.check(input)?;
        if ti.rank() == 0 || len == 0 {
            return Err(TensorError::EmptyReduction);
        }
        if start + len > ti.shape[0] {
            return Err(TensorError::IndexOutOfRange {
                index: start + len - 1,
                bound: ti.shape[0],
            });
        }
        let width: usize = ti.shape[1..].iter().product();
        let data = ti.data[start * width..(start + len) * width].to_vec();
        let mut shape = ti.shape.clone();
        shape[0] = len;
        let value = Tensor::from_parts(shape, data);
        self.record("slice_rows", value, &[input], Op::SliceRows { input, start })
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.check(*inputs.first().ok_or(TensorError::MissingOperand { op: "concat" })?)?;
        let rank = first.rank();
        if axis >= rank {
            return Err(TensorError::InvalidAxis { axis, rank });
        }
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for &v in inputs {
            let t = self.check(v)?;
            let compatible = t.rank() == rank
                && t.shape.iter().zip(&first.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first.shape.clone(),
                    right: t.shape.clone(),
                });
            }
            shape[axis] += t.shape[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = &self.nodes[v.index].value;
                let chunk: usize = t.shape[axis..].iter().product();
                data.extend_from_slice(&t.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::from_parts(shape, data);
        self.record(
            "concat",
            value,
            inputs,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let ti = self.check(input)?;
        let value = Tensor::new(shape.to_vec(), ti.data.clone())?;
        self.record("reshape", value, &[input], Op::Reshape { input })
    }

    /// Column `col` of a `[n x m]` matrix as a length-`n` vector.
    pub fn column(&mut self, input: Var, col: usize) -> Result<Var> {
        let ti = self.check(input)?;
        if ti.rank() != 2 {
            return Err(TensorError::InvalidAxis { axis: 1, rank: ti.rank() });
        }
        let (n, m) = (ti.shape[0], ti.shape[1]);
        if col >= m {
            return Err(TensorError::IndexOutOfRange { index: col, bound: m });
        }
        let data = (0..n).map(|r| ti.data[r * m + col]).collect();
        let value = Tensor::from_parts(vec![n], data);
        self.record("column", value, &[input], Op::Column { input, col })
    }
}

fn is_trailing_singleton(a: &[usize], b: &[usize]) -> bool {
    !a.is_empty()
        && a.len() == b.len()
        && b.last() == Some(&1)
        && a[..a.len() - 1] == b[..b.len() - 1]
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Vector-Jacobian products of one recorded node.
pub(super) fn backward_rule(nodes: &[Node], node: &Node, upstream: &Tensor) -> Vec<(Var, Tensor)> {
    let val = |v: Var| &nodes[v.index].value;
    let g = &upstream.data;
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Binary { kind, a, b, broadcast } => {
            let (ta, tb) = (val(*a), val(*b));
            let width = if *broadcast { *ta.shape.last().unwrap() } else { 1 };
            let (ga, gb_full): (Vec<f64>, Vec<f64>) = match kind {
                BinaryKind::Add => (g.clone(), g.clone()),
                BinaryKind::Sub => (g.clone(), g.iter().map(|x| -x).collect()),
                BinaryKind::Mul => (
                    g.iter().enumerate().map(|(i, gi)| gi * tb.data[i / width]).collect(),
                    g.iter().zip(&ta.data).map(|(gi, x)| gi * x).collect(),
                ),
            };
            let gb = if *broadcast {
                let mut acc = vec![0.0; tb.len()];
                for (i, v) in gb_full.iter().enumerate() {
                    acc[i / width] += v;
                }
                acc
            } else {
                gb_full
            };
            vec![
                (*a, Tensor::from_parts(ta.shape.clone(), ga)),
                (*b, Tensor::from_parts(tb.shape.clone(), gb)),
            ]
        }
        Op::Unary { kind, a } => {
            let ta = val(*a);
            let out = &node.value.data;
            let grad: Vec<f64> = match kind {
                UnaryKind::Relu => g
                    .iter()
                    .zip(&ta.data)
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect(),
                UnaryKind::Sigmoid => g.iter().zip(out).map(|(gi, s)| gi * s * (1.0 - s)).collect(),
                UnaryKind::Tanh => g.iter().zip(out).map(|(gi, t)| gi * (1.0 - t * t)).collect(),
                UnaryKind::Ln => g.iter().zip(&ta.data).map(|(gi, x)| gi / x).collect(),
            };
            vec![(*a, Tensor::from_parts(ta.shape.clone(), grad))]
        }
        Op::Scale { a, factor } => {
            vec![(*a, Tensor::from_parts(upstream.shape.clone(), g.iter().map(|x| x * factor).collect()))]
        }
        Op::Clamp { a, lo, hi } => {
            let ta = val(*a);
            let grad = g
                .iter()
                .zip(&ta.data)
                .map(|(gi, x)| if x >= lo && x <= hi { *gi } else { 0.0 })
                .collect();
            vec![(*a, Tensor::from_parts(ta.shape.clone(), grad))]
        }
        Op::MatMul { a, b } => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
            let ga = matmul_raw(g, &transpose(&tb.data, k, n), m, n, k);
            let gb = matmul_raw(&transpose(&ta.data, m, k), g, k, m, n);
            vec![
                (*a, Tensor::from_parts(ta.shape.clone(), ga)),
                (*b, Tensor::from_parts(tb.shape.clone(), gb)),
            ]
        }
        Op::SparseRows { input, rows } => {
            let t = val(*input);
            let d = t.shape[1];
            let mut gi = vec![0.0; t.len()];
            for (i, row) in rows.iter().enumerate() {
                for &(j, w) in row {
                    for c in 0..d {
                        gi[j * d + c] += w * g[i * d + c];
                    }
                }
            }
            vec![(*input, Tensor::from_parts(t.shape.clone(), gi))]
        }
        Op::AddBias { x, bias } => {
            let tb = val(*bias);
            let d = tb.shape[0];
            let mut gb = vec![0.0; d];
            for (i, v) in g.iter().enumerate() {
                gb[i % d] += v;
            }
            vec![
                (*x, upstream.clone()),
                (*bias, Tensor::from_parts(tb.shape.clone(), gb)),
            ]
        }
        Op::Conv1d {
            input,
            kernel,
            pad_left,
        } => {
            let (ti, tk) = (val(*input), val(*kernel));
            let (len, cin) = (ti.shape[0], ti.shape[1]);
            let (k, cout) = (tk.shape[0], tk.shape[2]);
            let out_len = node.value.shape[0];
            let mut gi = vec![0.0; ti.len()];
            let mut gk = vec![0.0; tk.len()];
            for t in 0..out_len {
                let gy = &g[t * cout..(t + 1) * cout];
                for j in 0..k {
                    let Some(src) = (t + j).checked_sub(*pad_left).filter(|&s| s < len) else {
                        continue;
                    };
                    for c in 0..cin {
                        let base = (j * cin + c) * cout;
                        let w = &tk.data[base..base + cout];
                        gi[src * cin + c] += gy.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                        let x = ti.data[src * cin + c];
                        for (acc, gyo) in gk[base..base + cout].iter_mut().zip(gy) {
                            *acc += gyo * x;
                        }
                    }
                }
            }
            vec![
                (*input, Tensor::from_parts(ti.shape.clone(), gi)),
                (*kernel, Tensor::from_parts(tk.shape.clone(), gk)),
            ]
        }
        Op::Gather { table, indices } => {
            let tt = val(*table);
            let width: usize = tt.shape[1..].iter().product();
            let mut acc = vec![0.0; tt.len()];
            for (r, &i) in indices.iter().enumerate() {
                for (a, v) in acc[i * width..(i + 1) * width].iter_mut().zip(&g[r * width..(r + 1) * width]) {
                    *a += v;
                }
            }
            vec![(*table, Tensor::from_parts(tt.shape.clone(), acc))]
        }
        Op::Reduce {
            kind,
            input,
            outer,
            axis_len,
            inner,
            argmax,
        } => {
            let ti = val(*input);
            let mut acc = vec![0.0; ti.len()];
            match kind {
                ReduceKind::Max => {
                    for (slot, &src) in argmax.iter().enumerate() {
                        acc[src] += g[slot];
                    }
                }
                ReduceKind::Sum | ReduceKind::Mean => {
                    let factor = if *kind == ReduceKind::Mean { 1.0 / *axis_len as f64 } else { 1.0 };
                    for o in 0..*outer {
                        for k in 0..*axis_len {
                            for i in 0..*inner {
                                acc[o * axis_len * inner + k * inner + i] = g[o * inner + i] * factor;
                            }
                        }
                    }
                }
            }
            vec![(*input, Tensor::from_parts(ti.shape.clone(), acc))]
        }
        Op::SliceRows { input, start } => {
            let ti = val(*input);
            let width: usize = ti.shape[1..].iter().product();
            let mut acc = vec![0.0; ti.len()];
            acc[start * width..start * width + g.len()].copy_from_slice(g);
            vec![(*input, Tensor::from_parts(ti.shape.clone(), acc))]
        }
        Op::Concat { inputs, axis } => {
            let outer: usize = node.value.shape[..*axis].iter().product();
            let mut parts: Vec<Vec<f64>> = inputs.iter().map(|v| Vec::with_capacity(val(*v).len())).collect();
            let mut offset = 0;
            for _ in 0..outer {
                for (p, v) in parts.iter_mut().zip(inputs) {
                    let chunk: usize = val(*v).shape[*axis..].iter().product();
                    p.extend_from_slice(&g[offset..offset + chunk]);
                    offset += chunk;
                }
            }
            inputs
                .iter()
                .zip(parts)
                .map(|(v, p)| (*v, Tensor::from_parts(val(*v).shape.clone(), p)))
                .collect()
        }
        Op::Reshape { input } => {
            vec![(*input, Tensor::from_parts(val(*input).shape.clone(), g.clone()))]
        }
        Op::Column { input, col } => {
            let ti = val(*input);
            let m = ti.shape[1];
            let mut acc = vec![0.0; ti.len()];
            for (r, v) in g.iter().enumerate() {
                acc[r * m + col] = *v;
            }
            vec![(*input, Tensor::from_parts(ti.shape.clone(), acc))]
        }
    }
}
