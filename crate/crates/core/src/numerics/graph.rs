//! Define-by-run reverse-mode differentiation over a closed operator set.
//!
//! Values are computed eagerly when a node is added, so `forward` is a cache
//! lookup. Nodes only ever reference earlier nodes, which keeps the graph
//! acyclic and lets `backward` walk the node list in reverse.

use std::borrow::Cow;

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Transpose(NodeId),
    Add {
        a: NodeId,
        b: NodeId,
        broadcast: bool,
    },
    MulScalar(NodeId, f64),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax(NodeId),
    Gelu(NodeId),
    Relu(NodeId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        patches: Vec<f64>,
    },
    MeanPool(NodeId),
    SliceRows {
        x: NodeId,
        start: usize,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    EmbeddingAdd(NodeId),
    Sum(NodeId),
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        row_weights: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Transpose(_) => "transpose",
            Op::Add { .. } => "add",
            Op::MulScalar(..) => "mul_scalar",
            Op::LayerNorm { .. } => "layernorm",
            Op::Softmax(_) => "softmax",
            Op::Gelu(_) => "gelu",
            Op::Relu(_) => "relu",
            Op::Conv1d { .. } => "conv1d",
            Op::MeanPool(_) => "mean_pool",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::EmbeddingAdd(_) => "embedding_add",
            Op::Sum(_) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
}

/// A computation graph. Leaves may borrow tensors (parameters) for the
/// lifetime `'a` to avoid copying them per graph.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `id`, or zeros of the node's shape when the node was not
    /// reachable from the loss.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn vector_len(shape: &[usize]) -> Option<usize> {
    match shape {
        [n] => Some(*n),
        [1, n] => Some(*n),
        _ => None,
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn dims2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        self.value(id)
            .dims2()
            .ok_or_else(|| mismatch(op, self.value(id).shape(), &[]))
    }

    /// Owned leaf.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Trainable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(value),
            requires_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Frozen leaf borrowing its value.
    pub fn constant(&mut self, value: &'a Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(value),
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Value of `root`. Every intermediate is already cached for `backward`.
    pub fn forward(&self, root: NodeId) -> &Tensor {
        self.value(root)
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn ensure_finite(&self, id: NodeId) -> Result<()> {
        if self.value(id).all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!(
                "{} (node {})",
                self.op_name(id),
                id.0
            )))
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(mismatch(
                "matmul",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(m, n, out)?, rg))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(mismatch(
                "matmul_nt",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMulNt(a, b), Tensor::matrix(m, n, out)?, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(Op::Transpose(a), t, rg))
    }

    /// Elementwise sum. `b` may also be a vector (`[n]` or `[1, n]`) added to
    /// every row of a `[m, n]` matrix `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        let broadcast = if sa == sb {
            false
        } else {
            match (sa.as_slice(), vector_len(&sb)) {
                ([_, n], Some(len)) if *n == len => true,
                _ => return Err(mismatch("add", &sa, &sb)),
            }
        };
        let mut out = self.value(a).clone();
        let bd = self.value(b).data();
        if broadcast {
            let n = bd.len();
            for row in out.data_mut().chunks_mut(n) {
                for (o, &v) in row.iter_mut().zip(bd) {
                    *o += v;
                }
            }
        } else {
            for (o, &v) in out.data_mut().iter_mut().zip(bd) {
                *o += v;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add { a, b, broadcast }, out, rg))
    }

    pub fn mul_scalar(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(a);
        Ok(self.push(Op::MulScalar(a, k), out, rg))
    }

    /// Row-wise layer normalization with affine `gamma`, `beta`.
    pub fn layernorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (m, n) = self.dims2(x, "layernorm")?;
        for p in [gamma, beta] {
            if vector_len(self.value(p).shape()) != Some(n) {
                return Err(mismatch(
                    "layernorm",
                    self.value(x).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mu) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * gd[j] + bd[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            value,
            rg,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (_, n) = self.dims2(a, "softmax")?;
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Op::Softmax(a), out, rg))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(gelu);
        let rg = self.rg(a);
        Ok(self.push(Op::Gelu(a), out, rg))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(Op::Relu(a), out, rg))
    }

    /// Strided valid 1-D convolution over a time-major input `x: [len, c_in]`
    /// with `w: [c_out, c_in, kernel]` and `b: [c_out]`. Output is
    /// `[(len - kernel) / stride + 1, c_out]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let (len, c_in) = self.dims2(x, "conv1d")?;
        let ws = self.value(w).shape().to_vec();
        let [c_out, wc_in, kernel] = ws.as_slice() else {
            return Err(mismatch("conv1d", self.value(x).shape(), &ws));
        };
        let (c_out, kernel) = (*c_out, *kernel);
        if *wc_in != c_in || kernel > len || stride == 0 {
            return Err(mismatch("conv1d", self.value(x).shape(), &ws));
        }
        if vector_len(self.value(b).shape()) != Some(c_out) {
            return Err(mismatch("conv1d", &ws, self.value(b).shape()));
        }
        let out_len = (len - kernel) / stride + 1;
        let ck = c_in * kernel;
        let xd = self.value(x).data();
        let mut patches = vec![0.0; out_len * ck];
        for t in 0..out_len {
            let prow = &mut patches[t * ck..(t + 1) * ck];
            for c in 0..c_in {
                for k in 0..kernel {
                    prow[c * kernel + k] = xd[(t * stride + k) * c_in + c];
                }
            }
        }
        let mut out = vec![0.0; out_len * c_out];
        for row in out.chunks_mut(c_out) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm_nt_acc(&patches, self.value(w).data(), &mut out, out_len, ck, c_out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::matrix(out_len, c_out, out)?;
        Ok(self.push(
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                patches,
            },
            value,
            rg,
        ))
    }

    /// Mean over rows: `[m, n] -> [1, n]`.
    pub fn mean_pool(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "mean_pool")?;
        let mut out = vec![0.0; n];
        for row in self.value(a).data().chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let rg = self.rg(a);
        Ok(self.push(Op::MeanPool(a), Tensor::row(&out), rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.dims2(x, "slice_rows")?;
        if start >= end || end > m {
            return Err(mismatch("slice_rows", &[m, n], &[start, end]));
        }
        let data = self.value(x).data()[start * n..end * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Op::SliceRows { x, start },
            Tensor::matrix(end - start, n, data)?,
            rg,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if start >= end || end > n {
            return Err(mismatch("slice_cols", &[m, n], &[start, end]));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for row in self.value(x).data().chunks(n) {
            data.extend_from_slice(&row[start..end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Op::SliceCols { x, start }, Tensor::matrix(m, w, data)?, rg))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("concat_rows", &[], &[]))?;
        let (_, n) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, pn) = self.dims2(p, "concat_rows")?;
            if pn != n {
                return Err(mismatch(
                    "concat_rows",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Op::ConcatRows(parts.to_vec()),
            Tensor::matrix(rows, n, data)?,
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("concat_cols", &[], &[]))?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, w) = self.dims2(p, "concat_cols")?;
            if pm != m {
                return Err(mismatch(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::matrix(m, total, data)?,
            rg,
        ))
    }

    /// Adds a fixed (non-trainable) table such as positional encodings.
    pub fn embedding_add(&mut self, x: NodeId, table: &Tensor) -> Result<NodeId> {
        if self.value(x).shape() != table.shape() {
            return Err(mismatch(
                "embedding_add",
                self.value(x).shape(),
                table.shape(),
            ));
        }
        let mut out = self.value(x).clone();
        out.add_assign(table);
        let rg = self.rg(x);
        Ok(self.push(Op::EmbeddingAdd(x), out, rg))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        Ok(self.push(Op::Sum(a), Tensor::scalar(s), rg))
    }

    /// Weighted cross-entropy averaged over the batch:
    /// `mean_i w_i * -log softmax(logits_i)[label_i]`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        row_weights: &[f64],
    ) -> Result<NodeId> {
        let (b, c) = self.dims2(logits, "cross_entropy")?;
        if labels.len() != b || row_weights.len() != b {
            return Err(mismatch(
                "cross_entropy",
                &[b, c],
                &[labels.len(), row_weights.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let zd = self.value(logits).data();
        let mut probs = vec![0.0; b * c];
        let mut total = 0.0;
        for i in 0..b {
            let row = &zd[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            total += row_weights[i] * (lse - row[labels[i]]);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                row_weights: row_weights.to_vec(),
                probs,
            },
            Tensor::scalar(total / b as f64),
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Leaves not reachable from the loss
    /// (or not requiring grad) report zero gradients through
    /// [`Gradients::wrt`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn acc<F: FnOnce(&mut [f64])>(&self, grads: &mut [Option<Tensor>], id: NodeId, f: F) {
        if !self.rg(id) {
            return;
        }
        let g = grads[id.0].get_or_insert_with(|| Tensor::zeros(self.value(id).shape()));
        f(g.data_mut());
    }

    fn propagate(&self, op: &Op, y: &Tensor, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let dyd = dy.data();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let n = y.shape()[1];
                let bv = self.value(*b).data();
                self.acc(grads, *a, |g| gemm_nt_acc(dyd, bv, g, m, n, k));
                let av = self.value(*a).data();
                self.acc(grads, *b, |g| gemm_tn_acc(av, dyd, g, m, k, n));
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let n = y.shape()[1];
                let bv = self.value(*b).data();
                self.acc(grads, *a, |g| gemm_acc(dyd, bv, g, m, n, k));
                let av = self.value(*a).data();
                self.acc(grads, *b, |g| gemm_tn_acc(dyd, av, g, m, n, k));
            }
            Op::Transpose(a) => {
                let (m, n) = y.dims2().unwrap();
                self.acc(grads, *a, |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[j * m + i] += dyd[i * n + j];
                        }
                    }
                });
            }
            Op::Add { a, b, broadcast } => {
                self.acc(grads, *a, |g| {
                    for (gv, d) in g.iter_mut().zip(dyd) {
                        *gv += d;
                    }
                });
                self.acc(grads, *b, |g| {
                    if *broadcast {
                        let n = g.len();
                        for row in dyd.chunks(n) {
                            for (gv, d) in g.iter_mut().zip(row) {
                                *gv += d;
                            }
                        }
                    } else {
                        for (gv, d) in g.iter_mut().zip(dyd) {
                            *gv += d;
                        }
                    }
                });
            }
            Op::MulScalar(a, k) => {
                self.acc(grads, *a, |g| {
                    for (gv, d) in g.iter_mut().zip(dyd) {
                        *gv += k * d;
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (m, n) = y.dims2().unwrap();
                let gd = self.value(*gamma).data();
                self.acc(grads, *x, |g| {
                    for i in 0..m {
                        let dyr = &dyd[i * n..(i + 1) * n];
                        let xh = &xhat[i * n..(i + 1) * n];
                        let mut mean_g = 0.0;
                        let mut mean_gx = 0.0;
                        for j in 0..n {
                            let gj = dyr[j] * gd[j];
                            mean_g += gj;
                            mean_gx += gj * xh[j];
                        }
                        mean_g /= n as f64;
                        mean_gx /= n as f64;
                        for j in 0..n {
                            let gj = dyr[j] * gd[j];
                            g[i * n + j] += rstd[i] * (gj - mean_g - xh[j] * mean_gx);
                        }
                    }
                });
                self.acc(grads, *gamma, |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[j] += dyd[i * n + j] * xhat[i * n + j];
                        }
                    }
                });
                self.acc(grads, *beta, |g| {
                    for row in dyd.chunks(n) {
                        for (gv, d) in g.iter_mut().zip(row) {
                            *gv += d;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let n = y.shape()[1];
                let yd = y.data();
                self.acc(grads, *a, |g| {
                    for ((grow, yrow), drow) in g.chunks_mut(n).zip(yd.chunks(n)).zip(dyd.chunks(n))
                    {
                        let dot: f64 = yrow.iter().zip(drow).map(|(p, d)| p * d).sum();
                        for j in 0..n {
                            grow[j] += yrow[j] * (drow[j] - dot);
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let xd = self.value(*a).data();
                self.acc(grads, *a, |g| {
                    for ((gv, &x), d) in g.iter_mut().zip(xd).zip(dyd) {
                        *gv += d * gelu_grad(x);
                    }
                });
            }
            Op::Relu(a) => {
                let xd = self.value(*a).data();
                self.acc(grads, *a, |g| {
                    for ((gv, &x), d) in g.iter_mut().zip(xd).zip(dyd) {
                        if x > 0.0 {
                            *gv += d;
                        }
                    }
                });
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                patches,
            } => {
                let (out_len, c_out) = y.dims2().unwrap();
                let ws = self.value(*w).shape();
                let (c_in, kernel) = (ws[1], ws[2]);
                let ck = c_in * kernel;
                self.acc(grads, *w, |g| {
                    gemm_tn_acc(dyd, patches, g, out_len, c_out, ck)
                });
                self.acc(grads, *b, |g| {
                    for row in dyd.chunks(c_out) {
                        for (gv, d) in g.iter_mut().zip(row) {
                            *gv += d;
                        }
                    }
                });
                if self.rg(*x) {
                    let mut dp = vec![0.0; out_len * ck];
                    gemm_acc(dyd, self.value(*w).data(), &mut dp, out_len, c_out, ck);
                    self.acc(grads, *x, |g| {
                        for t in 0..out_len {
                            for c in 0..c_in {
                                for k in 0..kernel {
                                    g[(t * stride + k) * c_in + c] += dp[t * ck + c * kernel + k];
                                }
                            }
                        }
                    });
                }
            }
            Op::MeanPool(a) => {
                let (m, n) = self.value(*a).dims2().unwrap();
                let inv = 1.0 / m as f64;
                self.acc(grads, *a, |g| {
                    for row in g.chunks_mut(n) {
                        for (gv, d) in row.iter_mut().zip(dyd) {
                            *gv += d * inv;
                        }
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let n = y.shape()[1];
                self.acc(grads, *x, |g| {
                    let dst = &mut g[start * n..start * n + dyd.len()];
                    for (gv, d) in dst.iter_mut().zip(dyd) {
                        *gv += d;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let (m, w) = y.dims2().unwrap();
                let n = self.value(*x).shape()[1];
                self.acc(grads, *x, |g| {
                    for i in 0..m {
                        for j in 0..w {
                            g[i * n + start + j] += dyd[i * w + j];
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    let src = &dyd[offset..offset + len];
                    self.acc(grads, p, |g| {
                        for (gv, d) in g.iter_mut().zip(src) {
                            *gv += d;
                        }
                    });
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = y.dims2().unwrap();
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    self.acc(grads, p, |g| {
                        for i in 0..m {
                            for j in 0..w {
                                g[i * w + j] += dyd[i * total + col + j];
                            }
                        }
                    });
                    col += w;
                }
            }
            Op::EmbeddingAdd(a) | Op::Sum(a) => {
                let scalar = matches!(op, Op::Sum(_));
                self.acc(grads, *a, |g| {
                    if scalar {
                        for gv in g.iter_mut() {
                            *gv += dyd[0];
                        }
                    } else {
                        for (gv, d) in g.iter_mut().zip(dyd) {
                            *gv += d;
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                row_weights,
                probs,
            } => {
                let b = labels.len();
                let c = probs.len() / b;
                let scale = dyd[0] / b as f64;
                self.acc(grads, *logits, |g| {
                    for i in 0..b {
                        let wi = row_weights[i] * scale;
                        for j in 0..c {
                            let target = if j == labels[i] { 1.0 } else { 0.0 };
                            g[i * c + j] += wi * (probs[i * c + j] - target);
                        }
                    }
                });
            }
        }
    }
}
