use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Exp(Var),
    Ln(Var, f64),
    Softmax {
        x: Var,
        outer: usize,
        k: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    L2Normalize {
        x: Var,
        norms: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    MeanRows(Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Reshape(Var),
    GradReverse(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Dynamic tape. Nodes are appended in creation order, so every input of a
/// node precedes it and a reverse sweep is a valid topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, if backward reached this node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient as a tensor, zeros when nothing flowed into the node.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        match &self.nodes[v.0].grad {
            Some(g) => Tensor::new(value.shape(), g.clone()).expect("grad length"),
            None => Tensor::zeros(value.shape()),
        }
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.rank() != 2 {
            return Err(Error::Dimension {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(dim_err("matmul", self.value(a), self.value(b)));
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::MatMul(a, b), rg))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul_nt")?;
        let (n, k2) = self.mat_dims(b, "matmul_nt")?;
        if k != k2 {
            return Err(dim_err("matmul_nt", self.value(a), self.value(b)));
        }
        let data = kernels::matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::MatMulNT(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.mat_dims(a, "transpose")?;
        let data = kernels::transpose(self.value(a).data(), m, n);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(&[n, m], data)?, Op::Transpose(a), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(op, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    fn row_broadcast(
        &mut self,
        x: Var,
        r: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (tx, tr) = (self.value(x), self.value(r));
        let n = tx.last_dim();
        if tr.len() != n {
            return Err(dim_err(op, tx, tr));
        }
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, tr.data()[i % n]))
            .collect();
        Tensor::new(tx.shape(), data)
    }

    /// x + b, with b broadcast along the last axis.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let t = self.row_broadcast(x, b, "add_row", |v, r| v + r)?;
        let rg = self.rg(&[x, b]);
        Ok(self.push(t, Op::AddRow(x, b), rg))
    }

    /// x ⊙ s, with s broadcast along the last axis.
    pub fn mul_row(&mut self, x: Var, s: Var) -> Result<Var> {
        let t = self.row_broadcast(x, s, "mul_row", |v, r| v * r)?;
        let rg = self.rg(&[x, s]);
        Ok(self.push(t, Op::MulRow(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * c).collect();
        let t = Tensor::new(tx.shape(), data).unwrap();
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    fn map_unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(tx.shape(), data).unwrap();
        let rg = self.rg(&[x]);
        self.push(t, op, rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Gelu(x), kernels::gelu)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Exp(x), f64::exp)
    }

    /// ln(max(x, eps)); the gradient is zero where the clamp is active.
    pub fn ln_clamped(&mut self, x: Var, eps: f64) -> Var {
        self.map_unary(x, Op::Ln(x, eps), move |v| v.max(eps).ln())
    }

    /// Numerically stabilized softmax along `axis`. Entries equal to −∞ get
    /// probability zero; every slice must contain at least one finite entry.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(Error::contract(format!(
                "softmax axis {axis} out of range for {:?}",
                tx.shape()
            )));
        }
        let shape = tx.shape();
        let k = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = tx.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * k * inner + j * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for j in 0..k {
                    mx = mx.max(src[at(j)]);
                }
                if mx == f64::NEG_INFINITY {
                    return Err(Error::contract("softmax slice with every entry masked"));
                }
                let mut s = 0.0;
                for j in 0..k {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    s += e;
                }
                for j in 0..k {
                    out[at(j)] /= s;
                }
            }
        }
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Softmax { x, outer, k, inner }, rg))
    }

    /// Normalizes each slice along the last axis to zero mean and unit
    /// variance (no affine part).
    pub fn layernorm(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = tx.last_dim();
        let rows = tx.outer_len();
        let mut out = vec![0.0; tx.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &tx.data()[r * n..(r + 1) * n];
            let mut mean = 0.0;
            for v in row {
                mean += v;
            }
            mean /= n as f64;
            let mut var = 0.0;
            for v in row {
                var += (v - mean) * (v - mean);
            }
            var /= n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let t = Tensor::new(tx.shape(), out).unwrap();
        let rg = self.rg(&[x]);
        self.push(t, Op::LayerNorm { x, inv_std }, rg)
    }

    /// Scales each slice along the last axis to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.last_dim();
        let rows = tx.outer_len();
        let mut out = vec![0.0; tx.len()];
        let mut norms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &tx.data()[r * n..(r + 1) * n];
            let norm = kernels::dot(row, row).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Degenerate(format!(
                    "l2_normalize of a vector with norm {norm}"
                )));
            }
            for (o, v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = v / norm;
            }
            norms.push(norm);
        }
        let t = Tensor::new(tx.shape(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::L2Normalize { x, norms }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut s = 0.0;
        for v in self.value(x).data() {
            s += v;
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut s = 0.0;
        for v in tx.data() {
            s += v;
        }
        let m = s / tx.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Sums over the last axis: `[.., n] -> [..]` (rank-1 input gives `[1]`).
    pub fn sum_last(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = tx.last_dim();
        let rows = tx.outer_len();
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for v in &tx.data()[r * n..(r + 1) * n] {
                s += v;
            }
            *o = s;
        }
        let shape = if tx.rank() == 1 {
            vec![1]
        } else {
            tx.shape()[..tx.rank() - 1].to_vec()
        };
        let t = Tensor::new(&shape, out).unwrap();
        let rg = self.rg(&[x]);
        self.push(t, Op::SumLast(x), rg)
    }

    /// Column means of a matrix: `[m×n] -> [n]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.mat_dims(x, "mean_rows")?;
        let tx = self.value(x);
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, v) in out.iter_mut().zip(tx.row(r)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&[n], out)?, Op::MeanRows(x), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat_dims(x, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::contract(format!(
                "slice_rows {start}..{} of {m} rows",
                start + len
            )));
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(&[len, n], data)?,
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows of nothing"));
        }
        let (_, n) = self.mat_dims(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, n2) = self.mat_dims(p, "concat_rows")?;
            if n2 != n {
                return Err(dim_err("concat_rows", self.value(parts[0]), self.value(p)));
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(&[rows, n], data)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat_dims(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::contract(format!(
                "slice_cols {start}..{} of {n} cols",
                start + len
            )));
        }
        let tx = self.value(x);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(&[m, len], data)?,
            Op::SliceCols { x, start },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols of nothing"));
        }
        let (m, _) = self.mat_dims(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (m2, n) = self.mat_dims(p, "concat_cols")?;
            if m2 != m {
                return Err(dim_err("concat_cols", self.value(parts[0]), self.value(p)));
            }
            widths.push(n);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(&[m, total], data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Identity forward; the backward pass multiplies the incoming gradient
    /// by −λ.
    pub fn grad_reverse(&mut self, x: Var, lambda: f64) -> Result<Var> {
        if !(lambda >= 0.0) {
            return Err(Error::contract(format!(
                "grad_reverse needs λ >= 0, got {lambda}"
            )));
        }
        let t = self.value(x).clone();
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::GradReverse(x, lambda), rg))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_with(loss, &[1.0])
    }

    /// Backpropagates an explicit upstream gradient from any node.
    /// Gradients accumulate into whatever is already stored.
    pub fn backward_with(&mut self, root: Var, seed: &[f64]) -> Result<()> {
        if seed.len() != self.value(root).len() {
            return Err(Error::Dimension {
                op: "backward",
                lhs: self.shape(root).to_vec(),
                rhs: vec![seed.len()],
            });
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        accumulate(&mut self.nodes[root.0].grad, seed);
        for id in (0..=root.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            let contributions = self.input_grads(id, &g);
            self.nodes[id].grad = Some(g);
            for (v, cg) in contributions {
                if self.nodes[v.0].requires_grad {
                    accumulate(&mut self.nodes[v.0].grad, &cg);
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, id: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if wants(*a) {
                    out.push((*a, kernels::matmul_nt(g, val(*b).data(), m, n, k)));
                }
                if wants(*b) {
                    out.push((*b, kernels::matmul_tn(val(*a).data(), g, m, k, n)));
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[0];
                if wants(*a) {
                    out.push((*a, kernels::matmul(g, val(*b).data(), m, n, k)));
                }
                if wants(*b) {
                    out.push((*b, kernels::matmul_tn(g, val(*a).data(), m, n, k)));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (val(*a).shape()[0], val(*a).shape()[1]);
                out.push((*a, kernels::transpose(g, n, m)));
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|x| -x).collect()));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    out.push((
                        *a,
                        g.iter().zip(val(*b).data()).map(|(x, y)| x * y).collect(),
                    ));
                }
                if wants(*b) {
                    out.push((
                        *b,
                        g.iter().zip(val(*a).data()).map(|(x, y)| x * y).collect(),
                    ));
                }
            }
            Op::AddRow(x, b) => {
                out.push((*x, g.to_vec()));
                if wants(*b) {
                    let n = val(*b).len();
                    let mut gb = vec![0.0; n];
                    for (i, gv) in g.iter().enumerate() {
                        gb[i % n] += gv;
                    }
                    out.push((*b, gb));
                }
            }
            Op::MulRow(x, s) => {
                let sv = val(*s).data();
                let n = sv.len();
                if wants(*x) {
                    out.push((
                        *x,
                        g.iter().enumerate().map(|(i, gv)| gv * sv[i % n]).collect(),
                    ));
                }
                if wants(*s) {
                    let xv = val(*x).data();
                    let mut gs = vec![0.0; n];
                    for (i, gv) in g.iter().enumerate() {
                        gs[i % n] += gv * xv[i];
                    }
                    out.push((*s, gs));
                }
            }
            Op::Scale(x, c) => out.push((*x, g.iter().map(|v| v * c).collect())),
            Op::Gelu(x) => out.push((
                *x,
                g.iter()
                    .zip(val(*x).data())
                    .map(|(gv, &xv)| gv * kernels::gelu_grad(xv))
                    .collect(),
            )),
            Op::Exp(x) => out.push((
                *x,
                g.iter()
                    .zip(node.value.data())
                    .map(|(a, b)| a * b)
                    .collect(),
            )),
            Op::Ln(x, eps) => out.push((
                *x,
                g.iter()
                    .zip(val(*x).data())
                    .map(|(gv, &xv)| if xv > *eps { gv / xv } else { 0.0 })
                    .collect(),
            )),
            Op::Softmax { x, outer, k, inner } => {
                let y = node.value.data();
                let mut gx = vec![0.0; y.len()];
                for o in 0..*outer {
                    for i in 0..*inner {
                        let at = |j: usize| o * k * inner + j * inner + i;
                        let mut d = 0.0;
                        for j in 0..*k {
                            d += g[at(j)] * y[at(j)];
                        }
                        for j in 0..*k {
                            gx[at(j)] = y[at(j)] * (g[at(j)] - d);
                        }
                    }
                }
                out.push((*x, gx));
            }
            Op::LayerNorm { x, inv_std } => {
                let xhat = node.value.data();
                let n = node.value.last_dim();
                let mut gx = vec![0.0; xhat.len()];
                for (r, is) in inv_std.iter().enumerate() {
                    let gr = &g[r * n..(r + 1) * n];
                    let xr = &xhat[r * n..(r + 1) * n];
                    let mut mg = 0.0;
                    let mut mgx = 0.0;
                    for (gv, xv) in gr.iter().zip(xr) {
                        mg += gv;
                        mgx += gv * xv;
                    }
                    mg /= n as f64;
                    mgx /= n as f64;
                    for j in 0..n {
                        gx[r * n + j] = is * (gr[j] - mg - xr[j] * mgx);
                    }
                }
                out.push((*x, gx));
            }
            Op::L2Normalize { x, norms } => {
                let y = node.value.data();
                let n = node.value.last_dim();
                let mut gx = vec![0.0; y.len()];
                for (r, norm) in norms.iter().enumerate() {
                    let gr = &g[r * n..(r + 1) * n];
                    let yr = &y[r * n..(r + 1) * n];
                    let d = kernels::dot(gr, yr);
                    for j in 0..n {
                        gx[r * n + j] = (gr[j] - yr[j] * d) / norm;
                    }
                }
                out.push((*x, gx));
            }
            Op::Sum(x) => out.push((*x, vec![g[0]; val(*x).len()])),
            Op::Mean(x) => {
                let n = val(*x).len();
                out.push((*x, vec![g[0] / n as f64; n]));
            }
            Op::SumLast(x) => {
                let n = val(*x).last_dim();
                out.push((*x, (0..val(*x).len()).map(|i| g[i / n]).collect()));
            }
            Op::MeanRows(x) => {
                let (m, n) = (val(*x).shape()[0], val(*x).shape()[1]);
                out.push((*x, (0..m * n).map(|i| g[i % n] / m as f64).collect()));
            }
            Op::SliceRows { x, start } => {
                let n = val(*x).shape()[1];
                let mut gx = vec![0.0; val(*x).len()];
                gx[start * n..start * n + g.len()].copy_from_slice(g);
                out.push((*x, gx));
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = val(*p).len();
                    out.push((*p, g[off..off + len].to_vec()));
                    off += len;
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = (val(*x).shape()[0], val(*x).shape()[1]);
                let len = node.value.shape()[1];
                let mut gx = vec![0.0; m * n];
                for r in 0..m {
                    gx[r * n + start..r * n + start + len]
                        .copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                out.push((*x, gx));
            }
            Op::ConcatCols(parts) => {
                let m = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut off = 0;
                for p in parts {
                    let w = val(*p).shape()[1];
                    let mut gp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        gp.extend_from_slice(&g[r * total + off..r * total + off + w]);
                    }
                    out.push((*p, gp));
                    off += w;
                }
            }
            Op::Reshape(x) => out.push((*x, g.to_vec())),
            Op::GradReverse(x, lambda) => out.push((*x, g.iter().map(|v| -lambda * v).collect())),
        }
        out
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}
