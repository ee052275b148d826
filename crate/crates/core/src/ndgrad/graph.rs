use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::math;
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Local response normalization constants (across channels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub k: f64,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            k: 2.0,
            n: 5,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// y = mul * x + add, elementwise. Only the slope matters in reverse.
    Affine {
        x: NodeId,
        mul: f64,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Softmax(NodeId),
    Sum(NodeId),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Slice {
        x: NodeId,
        offset: usize,
    },
    /// Embed a vector into a zero tensor at `offset`, consecutive elements
    /// `stride` apart. Used to place pooled hidden states into structured
    /// context tensors.
    ScatterStrided {
        x: NodeId,
        offset: usize,
        stride: usize,
    },
    Embedding {
        table: NodeId,
        index: usize,
    },
    MatMul(NodeId, NodeId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
    },
    MaxPool2d {
        x: NodeId,
        window: usize,
        stride: usize,
    },
    Lrn {
        x: NodeId,
        params: LrnParams,
    },
    Flatten(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient map produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the node, if any flowed to it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Define-by-run tape: operations are recorded in insertion order during the
/// forward pass, which is also a topological order, and replayed in reverse
/// by [`Graph::backward`]. A graph is single-threaded and rebuilt per step.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input value (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    fn binary_shapes(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_shapes("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_shapes("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_shapes("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_shapes("div", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x / y);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Div(a, b)))
    }

    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let value = self.value(x).map(|v| mul * v + add);
        self.push(value, Op::Affine { x, mul })
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(math::sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(math::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(math::exp);
        self.push(value, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(math::ln);
        self.push(value, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(math::sqrt);
        self.push(value, Op::Sqrt(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp { x, lo, hi })
    }

    /// Softmax over a rank-1 tensor.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        if t.shape().len() != 1 {
            return Err(Error::shape("softmax", t.shape(), &[t.numel()]));
        }
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.data().iter().map(|&v| math::exp(v - max)).collect();
        let total: f64 = exps.iter().sum();
        let data: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(&shape, data)?, Op::Softmax(x)))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.affine(s, 1.0 / n, 0.0)
    }

    /// Dot product of two rank-1 tensors, as a `[1]` tensor.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let prod = self.mul(a, b)?;
        Ok(self.sum(prod))
    }

    /// Concatenate rank-1 tensors into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero parts"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 1 {
                return Err(Error::shape("concat", t.shape(), &[t.numel()]));
            }
            data.extend_from_slice(t.data());
        }
        let len = data.len();
        Ok(self.push(
            Tensor::new(&[len], data)?,
            Op::Concat(parts.to_vec()),
        ))
    }

    /// Stack k rank-1 tensors of length n into a `[k, n]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::contract("stack_rows of zero rows"));
        }
        let n = self.value(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            let t = self.value(r);
            if t.shape().len() != 1 || t.numel() != n {
                return Err(Error::shape("stack_rows", t.shape(), &[n]));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(
            Tensor::new(&[rows.len(), n], data)?,
            Op::StackRows(rows.to_vec()),
        ))
    }

    /// Contiguous slice `[offset, offset+len)` of a rank-1 tensor.
    pub fn slice(&mut self, x: NodeId, offset: usize, len: usize) -> Result<NodeId> {
        let t = self.value(x);
        if t.shape().len() != 1 || offset + len > t.numel() || len == 0 {
            return Err(Error::contract("slice out of bounds"));
        }
        let data = t.data()[offset..offset + len].to_vec();
        Ok(self.push(Tensor::new(&[len], data)?, Op::Slice { x, offset }))
    }

    /// Element `i` of a rank-1 tensor, as a `[1]` tensor.
    pub fn at(&mut self, x: NodeId, i: usize) -> Result<NodeId> {
        self.slice(x, i, 1)
    }

    /// Place a rank-1 tensor into zeros of `out_shape`: element `j` of the
    /// input lands at flat position `offset + j * stride`.
    pub fn scatter_strided(
        &mut self,
        x: NodeId,
        out_shape: &[usize],
        offset: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let t = self.value(x);
        if t.shape().len() != 1 {
            return Err(Error::shape("scatter_strided", t.shape(), out_shape));
        }
        let numel: usize = out_shape.iter().product();
        let last = offset + (t.numel() - 1) * stride;
        if stride == 0 || last >= numel {
            return Err(Error::contract("scatter_strided out of bounds"));
        }
        let mut data = vec![0.0; numel];
        for (j, &v) in t.data().iter().enumerate() {
            data[offset + j * stride] = v;
        }
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::ScatterStrided { x, offset, stride },
        ))
    }

    /// Row `index` of a `[V, E]` table.
    pub fn embedding(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(Error::shape("embedding", t.shape(), &[0, 0]));
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        if index >= v {
            return Err(Error::contract("embedding index out of range"));
        }
        let data = t.data()[index * e..(index + 1) * e].to_vec();
        Ok(self.push(Tensor::new(&[e], data)?, Op::Embedding { table, index }))
    }

    /// Matrix product. Accepts `[m,k]x[k,n] -> [m,n]`, `[m,k]x[k] -> [m]`,
    /// and `[k]x[k,n] -> [n]`. No implicit broadcasting.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        let (m, k, n, out_shape): (usize, usize, usize, Vec<usize>) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => (sa[0], sa[1], sb[1], vec![sa[0], sb[1]]),
            (2, 1) if sa[1] == sb[0] => (sa[0], sa[1], 1, vec![sa[0]]),
            (1, 2) if sa[0] == sb[0] => (1, sa[0], sb[1], vec![sb[1]]),
            _ => return Err(Error::shape("matmul", &sa, &sb)),
        };
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::MatMul(a, b)))
    }

    /// Valid 2-D convolution: input `[C,H,W]`, kernels `[F,C,kh,kw]`,
    /// bias `[F]`, square stride.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let (sx, sw) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] {
            return Err(Error::shape("conv2d", &sx, &sw));
        }
        let sb = self.value(b).shape().to_vec();
        if sb != [sw[0]] {
            return Err(Error::shape("conv2d bias", &sb, &[sw[0]]));
        }
        let (c, h, wd) = (sx[0], sx[1], sx[2]);
        let (f, kh, kw) = (sw[0], sw[2], sw[3]);
        if stride == 0 || h < kh || wd < kw {
            return Err(Error::shape("conv2d", &sx, &sw));
        }
        let oh = (h - kh) / stride + 1;
        let ow = (wd - kw) / stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; f * oh * ow];
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bv[fi];
                    for ci in 0..c {
                        for ky in 0..kh {
                            let xrow = &xv[ci * h * wd + (oy * stride + ky) * wd + ox * stride..];
                            let wrow = &wv[fi * c * kh * kw + ci * kh * kw + ky * kw..];
                            for kx in 0..kw {
                                acc += xrow[kx] * wrow[kx];
                            }
                        }
                    }
                    out[fi * oh * ow + oy * ow + ox] = acc;
                }
            }
        }
        Ok(self.push(
            Tensor::new(&[f, oh, ow], out)?,
            Op::Conv2d { x, w, b, stride },
        ))
    }

    /// Valid max pooling over square windows, per channel. Input `[C,H,W]`.
    pub fn maxpool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 3 || window == 0 || stride == 0 || sx[1] < window || sx[2] < window {
            return Err(Error::shape("maxpool2d", &sx, &[window, window]));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        let xv = self.value(x).data();
        let mut out = vec![0.0; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..window {
                        for kx in 0..window {
                            let v = xv[ci * h * w + (oy * stride + ky) * w + ox * stride + kx];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out[ci * oh * ow + oy * ow + ox] = best;
                }
            }
        }
        Ok(self.push(
            Tensor::new(&[c, oh, ow], out)?,
            Op::MaxPool2d { x, window, stride },
        ))
    }

    /// Local response normalization across channels at each spatial
    /// position: `y_c = x_c * (k + alpha * sum_{j in N(c)} x_j^2)^(-beta)`
    /// with `N(c)` the window of `n` channels centered on `c`.
    pub fn lrn(&mut self, x: NodeId, params: LrnParams) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 3 {
            return Err(Error::shape("lrn", &sx, &[0, 0, 0]));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; c * h * w];
        let half = params.n / 2;
        for ci in 0..c {
            let lo = ci.saturating_sub(half);
            let hi = (ci + half).min(c - 1);
            for p in 0..h * w {
                let mut s = params.k;
                for j in lo..=hi {
                    let v = xv[j * h * w + p];
                    s += params.alpha * v * v;
                }
                out[ci * h * w + p] = xv[ci * h * w + p] * math::powf(s, -params.beta);
            }
        }
        Ok(self.push(Tensor::new(&sx, out)?, Op::Lrn { x, params }))
    }

    /// Rank-1 view of any tensor (row-major order preserved).
    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).flattened();
        self.push(value, Op::Flatten(x))
    }

    /// Reverse pass from a scalar loss. Visits nodes in reverse insertion
    /// order (reverse topological order) exactly once and returns the
    /// gradient for every node reachable from the loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract("backward requires a scalar loss node"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let (before, from_i) = grads.split_at_mut(i);
            let Some(gout) = from_i[0].as_ref() else {
                continue;
            };
            self.backward_op(i, gout, before)?;
        }
        Ok(Gradients { grads })
    }

    fn backward_op(&self, i: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let acc = |grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], data: Vec<f64>| {
            let slot = &mut grads[id.0];
            match slot {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(data.iter()) {
                        *a += b;
                    }
                }
                None => {
                    *slot = Some(Tensor::new(shape, data).expect("gradient shape"));
                }
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, out.shape(), gout.data().to_vec());
                acc(grads, *b, out.shape(), gout.data().to_vec());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, out.shape(), gout.data().to_vec());
                acc(grads, *b, out.shape(), gout.data().iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(grads, *a, out.shape(), zip_map(gout, bv, |g, y| g * y));
                acc(grads, *b, out.shape(), zip_map(gout, av, |g, x| g * x));
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(grads, *a, out.shape(), zip_map(gout, bv, |g, y| g / y));
                let db: Vec<f64> = gout
                    .data()
                    .iter()
                    .zip(av.data().iter().zip(bv.data().iter()))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect();
                acc(grads, *b, out.shape(), db);
            }
            Op::Affine { x, mul } => {
                acc(grads, *x, out.shape(), gout.data().iter().map(|g| g * mul).collect());
            }
            Op::Sigmoid(x) => {
                let d = zip_map(gout, out, |g, y| g * y * (1.0 - y));
                acc(grads, *x, out.shape(), d);
            }
            Op::Tanh(x) => {
                let d = zip_map(gout, out, |g, y| g * (1.0 - y * y));
                acc(grads, *x, out.shape(), d);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = zip_map(gout, xv, |g, v| if v > 0.0 { g } else { 0.0 });
                acc(grads, *x, out.shape(), d);
            }
            Op::Exp(x) => {
                let d = zip_map(gout, out, |g, y| g * y);
                acc(grads, *x, out.shape(), d);
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                let d = zip_map(gout, xv, |g, v| g / v);
                acc(grads, *x, out.shape(), d);
            }
            Op::Sqrt(x) => {
                let d = zip_map(gout, out, |g, y| g / (2.0 * y));
                acc(grads, *x, out.shape(), d);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                let d = zip_map(gout, xv, |g, v| if v > *lo && v < *hi { g } else { 0.0 });
                acc(grads, *x, out.shape(), d);
            }
            Op::Softmax(x) => {
                let y = out.data();
                let inner: f64 = gout.data().iter().zip(y.iter()).map(|(g, yi)| g * yi).sum();
                let d: Vec<f64> = gout
                    .data()
                    .iter()
                    .zip(y.iter())
                    .map(|(g, yi)| yi * (g - inner))
                    .collect();
                acc(grads, *x, out.shape(), d);
            }
            Op::Sum(x) => {
                let g = gout.data()[0];
                let n = self.value(*x).numel();
                acc(grads, *x, self.value(*x).shape(), vec![g; n]);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(
                        grads,
                        p,
                        self.value(p).shape(),
                        gout.data()[offset..offset + len].to_vec(),
                    );
                    offset += len;
                }
            }
            Op::StackRows(rows) => {
                let n = self.value(rows[0]).numel();
                for (ri, &r) in rows.iter().enumerate() {
                    acc(
                        grads,
                        r,
                        self.value(r).shape(),
                        gout.data()[ri * n..(ri + 1) * n].to_vec(),
                    );
                }
            }
            Op::Slice { x, offset } => {
                let src = self.value(*x);
                let mut d = vec![0.0; src.numel()];
                d[*offset..*offset + out.numel()].copy_from_slice(gout.data());
                acc(grads, *x, src.shape(), d);
            }
            Op::ScatterStrided { x, offset, stride } => {
                let src = self.value(*x);
                let d: Vec<f64> = (0..src.numel())
                    .map(|j| gout.data()[offset + j * stride])
                    .collect();
                acc(grads, *x, src.shape(), d);
            }
            Op::Embedding { table, index } => {
                let t = self.value(*table);
                let e = t.shape()[1];
                let mut d = vec![0.0; t.numel()];
                d[index * e..(index + 1) * e].copy_from_slice(gout.data());
                acc(grads, *table, t.shape(), d);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                let (m, k, n) = match (sa.len(), sb.len()) {
                    (2, 2) => (sa[0], sa[1], sb[1]),
                    (2, 1) => (sa[0], sa[1], 1),
                    (1, 2) => (1, sa[0], sb[1]),
                    _ => unreachable!("matmul shapes validated at forward"),
                };
                // dA = gout . B^T ; dB = A^T . gout
                let g = gout.data();
                let mut da = vec![0.0; m * k];
                for mi in 0..m {
                    for ki in 0..k {
                        let mut s = 0.0;
                        for ni in 0..n {
                            s += g[mi * n + ni] * tb.data()[ki * n + ni];
                        }
                        da[mi * k + ki] = s;
                    }
                }
                let mut db = vec![0.0; k * n];
                for ki in 0..k {
                    for ni in 0..n {
                        let mut s = 0.0;
                        for mi in 0..m {
                            s += ta.data()[mi * k + ki] * g[mi * n + ni];
                        }
                        db[ki * n + ni] = s;
                    }
                }
                acc(grads, *a, sa, da);
                acc(grads, *b, sb, db);
            }
            Op::Conv2d { x, w, b, stride } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (c, h, wd) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (f, kh, kw) = (tw.shape()[0], tw.shape()[2], tw.shape()[3]);
                let (oh, ow) = (out.shape()[1], out.shape()[2]);
                let g = gout.data();
                let mut dx = vec![0.0; tx.numel()];
                let mut dw = vec![0.0; tw.numel()];
                let mut db = vec![0.0; f];
                for fi in 0..f {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[fi * oh * ow + oy * ow + ox];
                            db[fi] += go;
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let xbase = ci * h * wd + (oy * stride + ky) * wd + ox * stride;
                                    let wbase = fi * c * kh * kw + ci * kh * kw + ky * kw;
                                    for kx in 0..kw {
                                        dx[xbase + kx] += go * tw.data()[wbase + kx];
                                        dw[wbase + kx] += go * tx.data()[xbase + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                acc(grads, *x, tx.shape(), dx);
                acc(grads, *w, tw.shape(), dw);
                acc(grads, *b, &[f], db);
            }
            Op::MaxPool2d { x, window, stride } => {
                let tx = self.value(*x);
                let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (oh, ow) = (out.shape()[1], out.shape()[2]);
                let mut dx = vec![0.0; tx.numel()];
                for ci in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            // First maximum in scan order wins (deterministic).
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            for ky in 0..*window {
                                for kx in 0..*window {
                                    let idx =
                                        ci * h * w + (oy * stride + ky) * w + ox * stride + kx;
                                    if tx.data()[idx] > best {
                                        best = tx.data()[idx];
                                        arg = idx;
                                    }
                                }
                            }
                            dx[arg] += gout.data()[ci * oh * ow + oy * ow + ox];
                        }
                    }
                }
                acc(grads, *x, tx.shape(), dx);
            }
            Op::Lrn { x, params } => {
                let tx = self.value(*x);
                let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let half = params.n / 2;
                let xv = tx.data();
                let g = gout.data();
                let mut dx = vec![0.0; tx.numel()];
                for p in 0..h * w {
                    // s_c for every channel at this position.
                    let mut s = vec![params.k; c];
                    for ci in 0..c {
                        let lo = ci.saturating_sub(half);
                        let hi = (ci + half).min(c - 1);
                        for j in lo..=hi {
                            let v = xv[j * h * w + p];
                            s[ci] += params.alpha * v * v;
                        }
                    }
                    for ci in 0..c {
                        let lo = ci.saturating_sub(half);
                        let hi = (ci + half).min(c - 1);
                        let mut d = g[ci * h * w + p] * math::powf(s[ci], -params.beta);
                        // The window relation is symmetric: i in N(c) iff c in N(i).
                        let mut coupling = 0.0;
                        for cj in lo..=hi {
                            coupling += g[cj * h * w + p]
                                * xv[cj * h * w + p]
                                * math::powf(s[cj], -params.beta - 1.0);
                        }
                        d -= 2.0 * params.alpha * params.beta * xv[ci * h * w + p] * coupling;
                        dx[ci * h * w + p] += d;
                    }
                }
                acc(grads, *x, tx.shape(), dx);
            }
            Op::Flatten(x) => {
                acc(grads, *x, self.value(*x).shape(), gout.data().to_vec());
            }
        }
        Ok(())
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for mi in 0..m {
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == 0.0 {
                continue;
            }
            let brow = &b[ki * n..(ki + 1) * n];
            let orow = &mut out[mi * n..(mi + 1) * n];
            for ni in 0..n {
                orow[ni] += av * brow[ni];
            }
        }
    }
    out
}
