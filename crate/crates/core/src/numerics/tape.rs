//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Operations are recorded in execution order; [`Tape::backward`] walks the
//! record in reverse, visiting each node once. Nodes created with
//! [`Tape::constant`] (and everything computed only from constants) never
//! receive a gradient.

use super::tensor::{gemm, Tensor};
use super::NumericsError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Sum {
        a: Var,
        axis: Option<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        a: Var,
        axis: usize,
        start: usize,
    },
    GatherRows {
        a: Var,
        idx: Vec<usize>,
    },
    Reshape(Var),
    L2Norm(Var),
    Normalize(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient buffer for `v`, or `None` when no gradient reached it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v` as a tensor; zeros when no gradient reached it.
    pub fn tensor(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches node shape"),
            None => Tensor::zeros(&shape),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

type Res = Result<Var, NumericsError>;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NumericsError {
    NumericsError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `b` broadcasts against `a` when its shape equals a trailing slice of `a`'s.
fn broadcasts(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// `[.., k] x [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Res {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av
            .matmul(bv)
            .map_err(|_| shape_err("matmul", av.shape(), bv.shape()))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Res {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(shape_err("transpose", av.shape(), &[]));
        }
        let (r, c) = (av.shape()[0], av.shape()[1]);
        let d = av.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Res {
        let (av, bv) = (self.value(a), self.value(b));
        if !broadcasts(av.shape(), bv.shape()) {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let bd = bv.data();
        let mut data = Vec::with_capacity(av.len());
        if !bd.is_empty() {
            for chunk in av.data().chunks(bd.len()) {
                data.extend(chunk.iter().zip(bd).map(|(&x, &y)| f(x, y)));
            }
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    /// Elementwise sum; `b` may broadcast over leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Res {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; `b` may broadcast over leading dimensions of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Res {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("unary preserves shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    fn row_map(&mut self, a: Var, f: impl Fn(&[f64], &mut [f64]), op: Op) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut out = vec![0.0; av.len()];
        if c > 0 {
            for (src, dst) in av.data().chunks(c).zip(out.chunks_mut(c)) {
                f(src, dst);
            }
        }
        let out = Tensor::new(av.shape().to_vec(), out).expect("row map preserves shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Var {
        self.row_map(a, softmax_row, Op::Softmax(a))
    }

    /// Log-softmax over the last dimension (finite for finite inputs).
    pub fn log_softmax(&mut self, a: Var) -> Var {
        self.row_map(
            a,
            |src, dst| {
                let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + src.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s - lse;
                }
            },
            Op::LogSoftmax(a),
        )
    }

    /// Sum over `axis`, or over everything when `axis` is `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Res {
        let av = self.value(a);
        let out = match axis {
            None => Tensor::scalar(av.data().iter().sum()),
            Some(ax) => {
                if ax >= av.shape().len() {
                    return Err(shape_err("sum", av.shape(), &[ax]));
                }
                let (outer, n, inner) = split_axis(av.shape(), ax);
                let d = av.data();
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for k in 0..n {
                        let base = (o * n + k) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += d[base + i];
                        }
                    }
                }
                let mut shape = av.shape().to_vec();
                shape.remove(ax);
                Tensor::new(shape, out)?
            }
        };
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sum { a, axis }, rg))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Res {
        let n = match axis {
            None => self.value(a).len(),
            Some(ax) => *self
                .shape(a)
                .get(ax)
                .ok_or_else(|| shape_err("mean", self.shape(a), &[ax]))?,
        };
        let s = self.sum(a, axis)?;
        Ok(self.scale(s, 1.0 / n.max(1) as f64))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Res {
        let first = inputs
            .first()
            .ok_or_else(|| shape_err("concat", &[], &[]))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let same_rank = s.len() == base.len();
            if !same_rank || s.iter().zip(&base).enumerate().any(|(i, (x, y))| i != axis && x != y) {
                return Err(shape_err("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Res {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(shape_err("narrow", &shape, &[axis, start, len]));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let d = av.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * n + start) * inner;
            out.extend_from_slice(&d[from..from + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(new_shape, out)?, Op::Narrow { a, axis, start }, rg))
    }

    /// Select entries of the first dimension.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Res {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if shape.is_empty() || idx.iter().any(|&i| i >= shape[0]) {
            return Err(shape_err("gather_rows", &shape, idx));
        }
        let inner: usize = shape[1..].iter().product();
        let d = av.data();
        let mut out = Vec::with_capacity(idx.len() * inner);
        for &i in idx {
            out.extend_from_slice(&d[i * inner..(i + 1) * inner]);
        }
        let mut new_shape = shape;
        new_shape[0] = idx.len();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Res {
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Euclidean norm over the last dimension.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols().max(1);
        let data: Vec<f64> = av
            .data()
            .chunks(c)
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut shape = av.shape().to_vec();
        shape.pop();
        let out = Tensor::new(shape, data).expect("norm drops last dim");
        let rg = self.rg(a);
        self.push(out, Op::L2Norm(a), rg)
    }

    /// Rows scaled to unit norm; zero rows stay zero.
    pub fn normalize(&mut self, a: Var) -> Var {
        self.row_map(
            a,
            |src, dst| {
                let n = src.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s / n;
                    }
                }
            },
            Op::Normalize(a),
        )
    }

    /// Row-wise cosine similarity of two equally shaped tensors. A zero row
    /// yields similarity 0 with zero gradient.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Res {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("cosine_similarity", self.shape(a), self.shape(b)));
        }
        let na = self.normalize(a);
        let nb = self.normalize(b);
        let prod = self.mul(na, nb)?;
        let last = self.shape(prod).len().saturating_sub(1);
        self.sum(prod, Some(last))
    }

    /// Reverse pass from a single-element node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(shape_err("backward", lv.shape(), &[]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing
                .iter_mut()
                .zip(contribution)
                .for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn acc_with(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.rg(v) {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.shape()[1]);
                // dA = G B^T, dB = A^T G
                self.acc_with(grads, *a, |da| gemm(m, n, k, g, false, bv.data(), true, da, 1.0));
                self.acc_with(grads, *b, |db| gemm(k, m, n, av.data(), true, g, false, db, 1.0));
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g[i * c + j];
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.acc(grads, *a, g.to_vec());
                let bl = self.value(*b).len().max(1);
                self.acc_with(grads, *b, |db| {
                    for chunk in g.chunks(bl) {
                        db.iter_mut().zip(chunk).for_each(|(d, &x)| *d += sign * x);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let bl = bd.len().max(1);
                self.acc_with(grads, *a, |da| {
                    for (dc, gc) in da.chunks_mut(bl).zip(g.chunks(bl)) {
                        for ((d, &x), &y) in dc.iter_mut().zip(gc).zip(bd) {
                            *d += x * y;
                        }
                    }
                });
                self.acc_with(grads, *b, |db| {
                    for (gc, ac) in g.chunks(bl).zip(ad.chunks(bl)) {
                        for ((d, &x), &y) in db.iter_mut().zip(gc).zip(ac) {
                            *d += x * y;
                        }
                    }
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.iter().map(|x| x * s).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.acc(grads, *a, g.to_vec()),
            Op::Sigmoid(a) => {
                let y = out.data();
                self.acc(grads, *a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Tanh(a) => {
                let y = out.data();
                self.acc(grads, *a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.acc(
                    grads,
                    *a,
                    g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::Softmax(a) => {
                let c = out.cols().max(1);
                let mut d = vec![0.0; g.len()];
                for ((y, gr), dr) in out.data().chunks(c).zip(g.chunks(c)).zip(d.chunks_mut(c)) {
                    let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((dv, yv), gv) in dr.iter_mut().zip(y).zip(gr) {
                        *dv = yv * (gv - dot);
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::LogSoftmax(a) => {
                let c = out.cols().max(1);
                let mut d = vec![0.0; g.len()];
                for ((y, gr), dr) in out.data().chunks(c).zip(g.chunks(c)).zip(d.chunks_mut(c)) {
                    let total: f64 = gr.iter().sum();
                    for ((dv, yv), gv) in dr.iter_mut().zip(y).zip(gr) {
                        *dv = gv - yv.exp() * total;
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g.iter().zip(x).map(|(g, x)| g / x).collect());
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect());
            }
            Op::Sqrt(a) => {
                let y = out.data();
                self.acc(
                    grads,
                    *a,
                    g.iter()
                        .zip(y)
                        .map(|(g, y)| if *y > 0.0 { g / (2.0 * y) } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sum { a, axis } => {
                let shape = self.value(*a).shape().to_vec();
                let n_in: usize = shape.iter().product();
                let d = match axis {
                    None => vec![g[0]; n_in],
                    Some(ax) => {
                        let (outer, n, inner) = split_axis(&shape, *ax);
                        let mut d = vec![0.0; n_in];
                        for o in 0..outer {
                            for k in 0..n {
                                let base = (o * n + k) * inner;
                                d[base..base + inner]
                                    .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                            }
                        }
                        d
                    }
                };
                self.acc(grads, *a, d);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = self.value(v).shape()[*axis];
                    if self.rg(v) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            d.extend_from_slice(&g[from..from + len * inner]);
                        }
                        self.acc(grads, v, d);
                    }
                    offset += len;
                }
            }
            Op::Narrow { a, axis, start } => {
                let in_shape = self.value(*a).shape().to_vec();
                let (outer, n, inner) = split_axis(&in_shape, *axis);
                let len = out.shape()[*axis];
                self.acc_with(grads, *a, |da| {
                    for o in 0..outer {
                        let to = (o * n + start) * inner;
                        let from = o * len * inner;
                        for j in 0..len * inner {
                            da[to + j] += g[from + j];
                        }
                    }
                });
            }
            Op::GatherRows { a, idx } => {
                let inner = out.len() / idx.len().max(1);
                self.acc_with(grads, *a, |da| {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..inner {
                            da[src * inner + j] += g[r * inner + j];
                        }
                    }
                });
            }
            Op::L2Norm(a) => {
                let x = self.value(*a);
                let c = x.cols().max(1);
                let mut d = vec![0.0; x.len()];
                for (r, (xr, dr)) in x.data().chunks(c).zip(d.chunks_mut(c)).enumerate() {
                    let n = out.data()[r];
                    if n > 0.0 {
                        for (dv, xv) in dr.iter_mut().zip(xr) {
                            *dv = g[r] * xv / n;
                        }
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::Normalize(a) => {
                let x = self.value(*a);
                let c = x.cols().max(1);
                let mut d = vec![0.0; x.len()];
                for (((xr, yr), gr), dr) in x
                    .data()
                    .chunks(c)
                    .zip(out.data().chunks(c))
                    .zip(g.chunks(c))
                    .zip(d.chunks_mut(c))
                {
                    let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > 0.0 {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *dv = (gv - yv * dot) / n;
                        }
                    }
                }
                self.acc(grads, *a, d);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, s) in dst.iter_mut().zip(src) {
        *d = (s - m).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}
