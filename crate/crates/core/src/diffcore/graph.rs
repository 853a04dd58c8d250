use std::collections::HashMap;

use super::{ParamId, ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Operation tag of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Constant,
    Param,
    ParamRow,
    MatMul,
    MatVec,
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    Scale,
    Negate,
    Dot,
    Concat,
    MeanPool,
    Sum,
    MulScalar,
    Bce,
    SoftmaxNll,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    ParamRow(ParamId, usize),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Scale(Var, f64),
    Negate(Var),
    Dot(Var, Var),
    Concat(Var, Var),
    MeanPool(Vec<Var>),
    Sum(Var),
    MulScalar(Var, Var),
    Bce {
        p: Var,
        target: f64,
    },
    SoftmaxNll {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Param(_) => OpKind::Param,
            Op::ParamRow(..) => OpKind::ParamRow,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatVec(..) => OpKind::MatVec,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Hadamard(..) => OpKind::Hadamard,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Scale(..) => OpKind::Scale,
            Op::Negate(_) => OpKind::Negate,
            Op::Dot(..) => OpKind::Dot,
            Op::Concat(..) => OpKind::Concat,
            Op::MeanPool(_) => OpKind::MeanPool,
            Op::Sum(_) => OpKind::Sum,
            Op::MulScalar(..) => OpKind::MulScalar,
            Op::Bce { .. } => OpKind::Bce,
            Op::SoftmaxNll { .. } => OpKind::SoftmaxNll,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) | Op::ParamRow(..) => vec![],
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Scale(a, _) | Op::Negate(a) | Op::Sum(a) => {
                vec![*a]
            }
            Op::MatMul(a, b)
            | Op::MatVec(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::Dot(a, b)
            | Op::Concat(a, b)
            | Op::MulScalar(a, b) => vec![*a, *b],
            Op::MeanPool(vs) => vs.clone(),
            Op::Bce { p, .. } => vec![*p],
            Op::SoftmaxNll { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    grad: Tensor,
}

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in creation order, which is always a topological
/// order, so [`Graph::backward`] is a single reverse sweep. A graph is built
/// per example and dropped afterwards.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut Tensor, src: &[f64]) {
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node { op, value, grad });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn require_scalar(&self, op: &'static str, v: Var) -> Result<()> {
        if !self.value(v).is_scalar() {
            return Err(Error::Shape {
                op,
                left: self.shape(v).to_vec(),
                right: vec![1],
            });
        }
        Ok(())
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    /// Leaf for a whole parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), store.value(id).clone());
        self.params.insert(id, v);
        v
    }

    /// Leaf holding one row of a matrix parameter (embedding lookup).
    pub fn param_row(&mut self, store: &ParameterStore, id: ParamId, row: usize) -> Result<Var> {
        let table = store.value(id);
        if table.rank() != 2 {
            return Err(Error::Shape {
                op: "param_row",
                left: table.shape().to_vec(),
                right: vec![0, 0],
            });
        }
        if row >= table.rows() {
            return Err(Error::Index {
                what: "parameter rows",
                index: row,
                len: table.rows(),
            });
        }
        let value = Tensor::vector(table.row(row).to_vec());
        Ok(self.push(Op::ParamRow(id, row), value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = ta.at(i, p);
                for j in 0..n {
                    out[i * n + j] += aip * tb.at(p, j);
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// Matrix `[m×k]` times vector `[k]`, giving `[m]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.len() {
            return Err(Error::Shape {
                op: "matvec",
                left: tw.shape().to_vec(),
                right: tx.shape().to_vec(),
            });
        }
        let xs = tx.data();
        let out = (0..tw.rows())
            .map(|i| tw.row(i).iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Op::MatVec(w, x), Tensor::vector(out)))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(op, value))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(op, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn negate(&mut self, a: Var) -> Var {
        self.map(a, |x| -x, Op::Negate(a))
    }

    /// Inner product of two equally shaped tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || tb.rank() != 1 {
            return Err(Error::Shape {
                op: "concat",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        Ok(self.push(Op::Concat(a, b), Tensor::vector(data)))
    }

    pub fn mean_pool(&mut self, vs: &[Var]) -> Result<Var> {
        let first = *vs
            .first()
            .ok_or_else(|| Error::precondition("mean_pool of an empty list"))?;
        for &v in &vs[1..] {
            self.same_shape("mean_pool", first, v)?;
        }
        let mut acc = Tensor::zeros(self.shape(first));
        for &v in vs {
            add_into(&mut acc, self.nodes[v.0].value.data());
        }
        let count = vs.len() as f64;
        acc.data_mut().iter_mut().for_each(|x| *x /= count);
        Ok(self.push(Op::MeanPool(vs.to_vec()), acc))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Tensor `v` scaled by the scalar node `s`.
    pub fn mul_scalar(&mut self, v: Var, s: Var) -> Result<Var> {
        self.require_scalar("mul_scalar", s)?;
        let c = self.scalar(s);
        let tv = self.value(v);
        let data = tv.data().iter().map(|x| c * x).collect();
        let value = Tensor::new(tv.shape().to_vec(), data)?;
        Ok(self.push(Op::MulScalar(v, s), value))
    }

    /// Binary cross-entropy of a probability node against a 0/1 target.
    pub fn bce_loss(&mut self, p: Var, target: f64) -> Result<Var> {
        self.require_scalar("bce_loss", p)?;
        let pc = self.scalar(p).clamp(BCE_EPS, 1.0 - BCE_EPS);
        let loss = -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln());
        Ok(self.push(Op::Bce { p, target }, Tensor::scalar(loss)))
    }

    /// Negative log of the softmax probability of `target`.
    pub fn softmax_nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 {
            return Err(Error::Shape {
                op: "softmax_nll",
                left: t.shape().to_vec(),
                right: vec![0],
            });
        }
        if target >= t.len() {
            return Err(Error::Index {
                what: "softmax classes",
                index: target,
                len: t.len(),
            });
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.data().iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let loss = total.ln() - (t.data()[target] - max);
        let probs = exps.into_iter().map(|e| e / total).collect();
        Ok(self.push(Op::SoftmaxNll { logits, target, probs }, Tensor::scalar(loss)))
    }

    /// Reverse sweep from a scalar root. All gradients are reset first, so
    /// calling this twice gives identical results.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::precondition(format!(
                "backward from non-scalar node of shape {:?}",
                self.shape(root)
            )));
        }
        for node in &mut self.nodes {
            node.grad.data_mut().fill(0.0);
        }
        self.nodes[root.0].grad.data_mut()[0] = 1.0;

        for i in (0..=root.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let g = node.grad.data();
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            match &node.op {
                Op::Constant | Op::Param(_) | Op::ParamRow(..) => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&before[a.0].value, &before[b.0].value);
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for c in 0..n {
                                let gij = g[r * n + c];
                                acc += gij * tb.at(p, c);
                                gb[p * n + c] += ta.at(r, p) * gij;
                            }
                            ga[r * k + p] = acc;
                        }
                    }
                    add_into(&mut before[a.0].grad, &ga);
                    add_into(&mut before[b.0].grad, &gb);
                }
                Op::MatVec(w, x) => {
                    let tw = &before[w.0].value;
                    let k = tw.cols();
                    let mut gx = vec![0.0; k];
                    for (r, gr) in g.iter().enumerate() {
                        for (gxj, wij) in gx.iter_mut().zip(tw.row(r)) {
                            *gxj += gr * wij;
                        }
                    }
                    let xv = before[x.0].value.data().to_vec();
                    let gw = &mut before[w.0].grad;
                    for (r, gr) in g.iter().enumerate() {
                        for (d, xj) in gw.row_mut(r).iter_mut().zip(&xv) {
                            *d += gr * xj;
                        }
                    }
                    add_into(&mut before[x.0].grad, &gx);
                }
                Op::Add(a, b) => {
                    add_into(&mut before[a.0].grad, g);
                    add_into(&mut before[b.0].grad, g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut before[a.0].grad, g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    add_into(&mut before[b.0].grad, &neg);
                }
                Op::Hadamard(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(before[b.0].value.data()).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(before[a.0].value.data()).map(|(g, x)| g * x).collect();
                    add_into(&mut before[a.0].grad, &ga);
                    add_into(&mut before[b.0].grad, &gb);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect();
                    add_into(&mut before[a.0].grad, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, t)| g * (1.0 - t * t))
                        .collect();
                    add_into(&mut before[a.0].grad, &ga);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|g| g * c).collect();
                    add_into(&mut before[a.0].grad, &ga);
                }
                Op::Negate(a) => {
                    let ga: Vec<f64> = g.iter().map(|g| -g).collect();
                    add_into(&mut before[a.0].grad, &ga);
                }
                Op::Dot(a, b) => {
                    let g0 = g[0];
                    let ga: Vec<f64> = before[b.0].value.data().iter().map(|y| g0 * y).collect();
                    let gb: Vec<f64> = before[a.0].value.data().iter().map(|x| g0 * x).collect();
                    add_into(&mut before[a.0].grad, &ga);
                    add_into(&mut before[b.0].grad, &gb);
                }
                Op::Concat(a, b) => {
                    let m = before[a.0].value.len();
                    add_into(&mut before[a.0].grad, &g[..m]);
                    add_into(&mut before[b.0].grad, &g[m..]);
                }
                Op::MeanPool(vs) => {
                    let count = vs.len() as f64;
                    let share: Vec<f64> = g.iter().map(|g| g / count).collect();
                    for v in vs {
                        add_into(&mut before[v.0].grad, &share);
                    }
                }
                Op::Sum(a) => {
                    let g0 = g[0];
                    before[a.0].grad.data_mut().iter_mut().for_each(|d| *d += g0);
                }
                Op::MulScalar(v, s) => {
                    let c = before[s.0].value.item();
                    let gs: f64 = g.iter().zip(before[v.0].value.data()).map(|(g, x)| g * x).sum();
                    let gv: Vec<f64> = g.iter().map(|g| g * c).collect();
                    add_into(&mut before[v.0].grad, &gv);
                    before[s.0].grad.data_mut()[0] += gs;
                }
                Op::Bce { p, target } => {
                    let pv = before[p.0].value.item();
                    // zero derivative where the clamp is active
                    if pv > BCE_EPS && pv < 1.0 - BCE_EPS {
                        let d = -target / pv + (1.0 - target) / (1.0 - pv);
                        before[p.0].grad.data_mut()[0] += g[0] * d;
                    }
                }
                Op::SoftmaxNll { logits, target, probs } => {
                    let g0 = g[0];
                    let gl = before[logits.0].grad.data_mut();
                    for (j, (d, p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *d += g0 * (p - onehot);
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds `weight` times every parameter leaf's gradient into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParameterStore, weight: f64) {
        for node in &self.nodes {
            match node.op {
                Op::Param(id) => {
                    let grad = &mut store.get_mut(id).grad;
                    for (d, g) in grad.data_mut().iter_mut().zip(node.grad.data()) {
                        *d += weight * g;
                    }
                }
                Op::ParamRow(id, row) => {
                    let grad = &mut store.get_mut(id).grad;
                    for (d, g) in grad.row_mut(row).iter_mut().zip(node.grad.data()) {
                        *d += weight * g;
                    }
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn vec_var(g: &mut Graph, v: &[f64]) -> Var {
        g.constant(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let id = g.constant(Tensor::identity(2));
        let m = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let p = g.matmul(id, m).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let row = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let col = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
        let p = g.matmul(row, col).unwrap();
        assert_eq!(g.value(p).shape(), &[1, 1]);
        assert_eq!(g.value(p).data(), &[11.0]);

        let zero = g.constant(Tensor::zeros(&[2, 2]));
        let any = g.constant(Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap());
        let p = g.matmul(zero, any).unwrap();
        assert_eq!(g.value(p).shape(), &[2, 3]);
        assert!(g.value(p).data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(z);
        let t = g.tanh(z);
        assert_eq!(g.scalar(s), 0.5);
        assert_eq!(g.scalar(t), 0.0);
        let a = vec_var(&mut g, &[1.0, 2.0]);
        let b = vec_var(&mut g, &[3.0, 4.0]);
        let h = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(h).data(), &[3.0, 8.0]);
        let c = vec_var(&mut g, &[1.0]);
        assert!(g.add(a, c).is_err());
        assert!(g.hadamard(a, c).is_err());
    }

    #[test]
    fn concat_examples() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 2.0]);
        let b = vec_var(&mut g, &[3.0]);
        let c = g.concat(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);

        let empty = g.constant(Tensor::vector(vec![]));
        let five = vec_var(&mut g, &[5.0]);
        let c2 = g.concat(empty, five).unwrap();
        assert_eq!(g.value(c2).data(), &[5.0]);

        let root = g.sum(c);
        g.backward(root).unwrap();
        assert_eq!(g.grad(a).data(), &[1.0, 1.0]);
        assert_eq!(g.grad(b).data(), &[1.0]);

        let m = g.constant(Tensor::zeros(&[1, 1]));
        assert!(g.concat(a, m).is_err());
    }

    #[test]
    fn mean_pool_examples() {
        let mut g = Graph::new();
        let a = vec_var(&mut g, &[1.0, 3.0]);
        let b = vec_var(&mut g, &[3.0, 5.0]);
        let m = g.mean_pool(&[a, b]).unwrap();
        assert_eq!(g.value(m).data(), &[2.0, 4.0]);
        let single = g.mean_pool(&[a]).unwrap();
        assert_eq!(g.value(single).data(), &[1.0, 3.0]);
        let copies = g.mean_pool(&[b, b, b]).unwrap();
        assert_eq!(g.value(copies).data(), &[3.0, 5.0]);
        assert!(matches!(g.mean_pool(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn bce_examples() {
        let mut g = Graph::new();
        let half = g.constant(Tensor::scalar(0.5));
        let l1 = g.bce_loss(half, 1.0).unwrap();
        let l0 = g.bce_loss(half, 0.0).unwrap();
        assert_abs_diff_eq!(g.scalar(l1), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.scalar(l0), std::f64::consts::LN_2, epsilon = 1e-12);
        let p = g.constant(Tensor::scalar(0.9));
        let l = g.bce_loss(p, 1.0).unwrap();
        assert_abs_diff_eq!(g.scalar(l), 0.105361, epsilon = 1e-6);

        let one = g.constant(Tensor::scalar(1.0));
        let l = g.bce_loss(one, 0.0).unwrap();
        assert!(g.scalar(l).is_finite());
        assert_abs_diff_eq!(g.scalar(l), -(BCE_EPS.ln()), epsilon = 1e-3);
    }

    #[test]
    fn softmax_nll_examples() {
        let mut g = Graph::new();
        let flat = vec_var(&mut g, &[0.3; 4]);
        for t in 0..4 {
            let l = g.softmax_nll(flat, t).unwrap();
            assert_abs_diff_eq!(g.scalar(l), 4f64.ln(), epsilon = 1e-12);
        }
        let peaked = vec_var(&mut g, &[10.0, 0.0]);
        let l = g.softmax_nll(peaked, 0).unwrap();
        let expected = -(1.0 / (1.0 + (-10f64).exp())).ln();
        assert_abs_diff_eq!(g.scalar(l), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(g.scalar(l), 4.54e-5, epsilon = 1e-7);

        let shifted = vec_var(&mut g, &[1010.0, 1000.0]);
        let ls = g.softmax_nll(shifted, 0).unwrap();
        assert_abs_diff_eq!(g.scalar(ls), g.scalar(l), epsilon = 1e-12);

        assert!(matches!(g.softmax_nll(peaked, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn backward_examples() {
        // sigma(w * x) at w = 0, x = 1
        let mut g = Graph::new();
        let w = g.constant(Tensor::scalar(0.0));
        let x = g.constant(Tensor::scalar(1.0));
        let wx = g.hadamard(w, x).unwrap();
        let root = g.sigmoid(wx);
        g.backward(root).unwrap();
        assert_abs_diff_eq!(g.grad(w).item(), 0.25, epsilon = 1e-15);

        let mut g = Graph::new();
        let v = vec_var(&mut g, &[1.0, -2.0, 3.0]);
        let root = g.sum(v);
        g.backward(root).unwrap();
        assert_eq!(g.grad(v).data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::new();
        let a = g.constant(Tensor::scalar(3.0));
        let y = g.add(a, a).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(a).item(), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let v = vec_var(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(v), Err(Error::Precondition(_))));
    }

    #[test]
    fn diamond_accumulates_path_contributions() {
        // y = a*b + tanh(a), dy/da = b + 1 - tanh(a)^2
        let mut g = Graph::new();
        let a = g.constant(Tensor::scalar(0.7));
        let b = g.constant(Tensor::scalar(-1.3));
        let ab = g.hadamard(a, b).unwrap();
        let ta = g.tanh(a);
        let y = g.add(ab, ta).unwrap();
        g.backward(y).unwrap();
        let expected = -1.3 + 1.0 - 0.7f64.tanh().powi(2);
        assert_abs_diff_eq!(g.grad(a).item(), expected, epsilon = 1e-14);
    }

    #[test]
    fn repeated_backward_is_identical() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::from_rows(&[vec![0.3, -0.2], vec![0.5, 0.1]]).unwrap());
        let x = vec_var(&mut g, &[1.0, 2.0]);
        let h = g.matvec(w, x).unwrap();
        let t = g.tanh(h);
        let root = g.dot(t, x).unwrap();
        g.backward(root).unwrap();
        let first = (g.grad(w).clone(), g.grad(x).clone());
        g.backward(root).unwrap();
        assert_eq!(first.0, *g.grad(w));
        assert_eq!(first.1, *g.grad(x));
    }

    #[test]
    fn param_rows_scatter_into_store() {
        let mut store = ParameterStore::new();
        let emb = store
            .add("emb", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap())
            .unwrap();
        let mut g = Graph::new();
        let r0 = g.param_row(&store, emb, 1).unwrap();
        let r1 = g.param_row(&store, emb, 1).unwrap();
        let s = g.add(r0, r1).unwrap();
        let root = g.sum(s);
        g.backward(root).unwrap();
        g.accumulate_param_grads(&mut store, 0.5);
        assert_eq!(store.grad(emb).data(), &[0.0, 0.0, 1.0, 1.0]);
        assert!(g.param_row(&store, emb, 2).is_err());
    }
}
