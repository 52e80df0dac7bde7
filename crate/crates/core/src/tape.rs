//! Reverse-mode automatic differentiation over whole matrices.
//!
//! Every operation evaluates eagerly when it is recorded; [`Tape::backward`]
//! then walks the records in reverse. Leaves created with
//! [`Tape::constant`] never receive gradients, and nothing downstream of
//! constants alone does either, which is how frozen parameters are expressed.

use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearity used inside feed-forward sublayers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// tanh approximation of GELU
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Gelu => {
                let u = T::c(GELU_C) * (x + T::c(0.044715) * x * x * x);
                T::c(0.5) * x * (T::one() + u.tanh())
            }
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let x2 = x * x;
                let u = T::c(GELU_C) * (x + T::c(0.044715) * x2 * x);
                let t = u.tanh();
                let du = T::c(GELU_C) * (T::one() + T::c(3.0 * 0.044715) * x2);
                T::c(0.5) * (T::one() + t) + T::c(0.5) * x * (T::one() - t * t) * du
            }
        }
    }
}

// sqrt(2 / pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Activate(Var, Activation),
    Tanh(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var },
    SoftmaxRows(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    Sum(Vec<Var>),
    CrossEntropy { logits: Var, targets: Vec<usize> },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op,
    requires_grad: bool,
    // Per-op saved state: normalized input for layer norm, probabilities
    // for cross-entropy.
    saved: Option<Matrix<T>>,
    saved_row: Option<Vec<T>>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, saved: None, saved_row: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMulNt(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the `1×n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "add_row bias must be a row vector");
        assert_eq!(b.cols(), self.value(a).cols(), "add_row width");
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_vec();
        for i in 0..value.rows() {
            for (x, &bb) in value.row_mut(i).iter_mut().zip(&b) {
                *x = *x + bb;
            }
        }
        let rg = self.rg(&[a, bias]);
        self.push(value, Op::AddRow(a, bias), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let st = T::c(s);
        let value = self.value(a).map(|x| x * st);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        let value = self.value(a).map(|x| act.apply(x));
        let rg = self.rg(&[a]);
        self.push(value, Op::Activate(a, act), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        let rg = self.rg(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (both `1×d`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let g = self.value(gamma).row(0);
        let b = self.value(beta).row(0);
        let mut out = Matrix::zeros(n, d);
        let mut xhat = Matrix::zeros(n, d);
        let mut rstd = Vec::with_capacity(n);
        let inv_d = T::one() / T::c(d as f64);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
            let r = T::one() / (var + T::c(LAYER_NORM_EPS)).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat[(i, j)] = h;
                out[(i, j)] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        let v = self.push(out, Op::LayerNorm { x, gamma, beta }, rg);
        self.nodes[v.0].saved = Some(xhat);
        self.nodes[v.0].saved_row = Some(rstd);
        v
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let rg = self.rg(&[a]);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_rows(&mats);
        let rg = self.rg(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&mats);
        let rg = self.rg(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_rows(start, len);
        let rg = self.rg(&[a]);
        self.push(value, Op::SliceRows(a, start), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_cols(start, len);
        let rg = self.rg(&[a]);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).gather_rows(idx);
        let rg = self.rg(&[a]);
        self.push(value, Op::GatherRows(a, idx.to_vec()), rg)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).mean_rows();
        let rg = self.rg(&[a]);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            value.add_assign(self.value(p));
        }
        let rg = self.rg(parts);
        self.push(value, Op::Sum(parts.to_vec()), rg)
    }

    /// Mean over rows of `-log softmax(logits)[target]`, as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target per logit row");
        assert!(!targets.is_empty(), "cross-entropy over zero rows");
        let probs = softmax_rows(lv);
        let mut loss = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = lv.row(i);
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln() + max;
            loss = loss + lse - row[t];
        }
        loss = loss / T::c(targets.len() as f64);
        let rg = self.rg(&[logits]);
        let v = self.push(
            Matrix::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec() },
            rg,
        );
        self.nodes[v.0].saved = Some(probs);
        v
    }

    /// Gradients of the `1×1` node `loss` with respect to all tracked nodes.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.matmul_nt(self.value(*b)));
                }
                if want(*b) {
                    accumulate(grads, *b, self.value(*a).matmul_tn(g));
                }
            }
            Op::MatMulNt(a, b) => {
                // c = a bᵀ: da = g b, db = gᵀ a
                if want(*a) {
                    accumulate(grads, *a, g.matmul(self.value(*b)));
                }
                if want(*b) {
                    accumulate(grads, *b, g.matmul_tn(self.value(*a)));
                }
            }
            Op::Transpose(a) => {
                if want(*a) {
                    accumulate(grads, *a, g.transpose());
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::AddRow(a, bias) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*bias) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &v) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d = *d + v;
                        }
                    }
                    accumulate(grads, *bias, db);
                }
            }
            Op::Scale(a, s) => {
                if want(*a) {
                    let st = T::c(*s);
                    accumulate(grads, *a, g.map(|x| x * st));
                }
            }
            Op::Activate(a, act) => {
                if want(*a) {
                    let x = self.value(*a);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| gv * act.derivative(xv))
                        .collect();
                    accumulate(grads, *a, Matrix::from_vec(x.rows(), x.cols(), data));
                }
            }
            Op::Tanh(a) => {
                if want(*a) {
                    let data = node
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &gv)| gv * (T::one() - y * y))
                        .collect();
                    accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
            }
            Op::LayerNorm { x, gamma, beta } => {
                let xhat = node.saved.as_ref().expect("layer norm cache");
                let rstd = node.saved_row.as_ref().expect("layer norm cache");
                let (n, d) = xhat.shape();
                let gam = self.value(*gamma).row(0);
                if want(*gamma) || want(*beta) {
                    let mut dg = Matrix::zeros(1, d);
                    let mut db = Matrix::zeros(1, d);
                    for i in 0..n {
                        for j in 0..d {
                            dg[(0, j)] = dg[(0, j)] + g[(i, j)] * xhat[(i, j)];
                            db[(0, j)] = db[(0, j)] + g[(i, j)];
                        }
                    }
                    if want(*gamma) {
                        accumulate(grads, *gamma, dg);
                    }
                    if want(*beta) {
                        accumulate(grads, *beta, db);
                    }
                }
                if want(*x) {
                    let inv_d = T::one() / T::c(d as f64);
                    let mut dx = Matrix::zeros(n, d);
                    for i in 0..n {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = g[(i, j)] * gam[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * xhat[(i, j)];
                        }
                        mean_dh = mean_dh * inv_d;
                        mean_dh_h = mean_dh_h * inv_d;
                        for j in 0..d {
                            let dh = g[(i, j)] * gam[j];
                            dx[(i, j)] = rstd[i] * (dh - mean_dh - xhat[(i, j)] * mean_dh_h);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::SoftmaxRows(a) => {
                if want(*a) {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let s = crate::tensor::dot(g.row(i), y.row(i));
                        for j in 0..y.cols() {
                            dx[(i, j)] = y[(i, j)] * (g[(i, j)] - s);
                        }
                    }
                    accumulate(grads, *a, dx);
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if want(p) {
                        accumulate(grads, p, g.slice_rows(start, rows));
                    }
                    start += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if want(p) {
                        accumulate(grads, p, g.slice_cols(start, cols));
                    }
                    start += cols;
                }
            }
            Op::SliceRows(a, start) => {
                if want(*a) {
                    let (r, c) = self.shape(*a);
                    let mut full = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        full.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    accumulate(grads, *a, full);
                }
            }
            Op::SliceCols(a, start) => {
                if want(*a) {
                    let (r, c) = self.shape(*a);
                    let mut full = Matrix::zeros(r, c);
                    for i in 0..r {
                        full.row_mut(i)[*start..start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(grads, *a, full);
                }
            }
            Op::GatherRows(a, idx) => {
                if want(*a) {
                    let (r, c) = self.shape(*a);
                    let mut full = Matrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (f, &v) in full.row_mut(i).iter_mut().zip(g.row(k)) {
                            *f = *f + v;
                        }
                    }
                    accumulate(grads, *a, full);
                }
            }
            Op::MeanRows(a) => {
                if want(*a) {
                    let (r, c) = self.shape(*a);
                    let inv = T::one() / T::c(r as f64);
                    let mut full = Matrix::zeros(r, c);
                    for i in 0..r {
                        for (f, &v) in full.row_mut(i).iter_mut().zip(g.row(0)) {
                            *f = v * inv;
                        }
                    }
                    accumulate(grads, *a, full);
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if want(p) {
                        accumulate(grads, p, g.clone());
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                if want(*logits) {
                    let probs = node.saved.as_ref().expect("cross-entropy cache");
                    let scale = g.to_scalar() / T::c(targets.len() as f64);
                    let mut d = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        d[(i, t)] = d[(i, t)] - T::one();
                    }
                    d.scale_assign(scale);
                    accumulate(grads, *logits, d);
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg64;

    /// Central-difference check of one leaf against the tape gradient.
    fn check(build: impl Fn(&mut Tape<f64>, Var) -> Var, leaf: Matrix<f64>) {
        let mut tape = Tape::new();
        let x = tape.param(leaf.clone());
        let loss = build(&mut tape, x);
        let grads = tape.backward(loss);
        let analytic = grads.get(x).cloned().unwrap_or_else(|| Matrix::zeros(leaf.rows(), leaf.cols()));
        let eps = 1e-5;
        for k in 0..leaf.len() {
            let mut plus = leaf.clone();
            plus.data_mut()[k] += eps;
            let mut minus = leaf.clone();
            minus.data_mut()[k] -= eps;
            let f = |m: Matrix<f64>| {
                let mut t = Tape::new();
                let x = t.param(m);
                let l = build(&mut t, x);
                t.value(l).to_scalar()
            };
            let numeric = (f(plus) - f(minus)) / (2.0 * eps);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-5, "entry {k}: analytic {a} numeric {numeric}");
        }
    }

    fn rand(r: usize, c: usize, seed: u64) -> Matrix<f64> {
        Matrix::random_normal(r, c, 1.0, &mut Lcg64::new(seed))
    }

    fn weighted_sum(t: &mut Tape<f64>, v: Var, seed: u64) -> Var {
        let (r, c) = t.shape(v);
        let w = t.constant(rand(c, 1, seed));
        let y = t.matmul(v, w);
        let ones = t.constant(Matrix::filled(1, r, 1.0));
        t.matmul(ones, y)
    }

    #[test]
    fn matmul_and_transpose_gradients() {
        let b = rand(4, 3, 1);
        check(
            move |t, x| {
                let bc = t.constant(b.clone());
                let y = t.matmul(x, bc);
                let yt = t.transpose(y);
                let z = t.matmul_nt(yt, yt);
                weighted_sum(t, z, 9)
            },
            rand(2, 4, 2),
        );
    }

    #[test]
    fn layer_norm_gradients() {
        let g = rand(1, 5, 3);
        let b = rand(1, 5, 4);
        check(
            |t, x| {
                let gv = t.constant(g.clone());
                let bv = t.constant(b.clone());
                let y = t.layer_norm(x, gv, bv);
                weighted_sum(t, y, 5)
            },
            rand(3, 5, 6),
        );
        let x0 = rand(3, 5, 7);
        check(
            |t, gamma| {
                let xv = t.constant(x0.clone());
                let bv = t.constant(b.clone());
                let y = t.layer_norm(xv, gamma, bv);
                weighted_sum(t, y, 8)
            },
            g.clone(),
        );
    }

    #[test]
    fn softmax_activation_and_ce_gradients() {
        check(
            |t, x| {
                let s = t.softmax_rows(x);
                let a = t.activate(s, Activation::Gelu);
                let h = t.tanh(a);
                weighted_sum(t, h, 10)
            },
            rand(2, 4, 11),
        );
        check(|t, x| t.cross_entropy(x, &[2, 0, 1]), rand(3, 4, 12));
    }

    #[test]
    fn structural_op_gradients() {
        let other = rand(2, 3, 13);
        check(
            move |t, x| {
                let o = t.constant(other.clone());
                let rows = t.concat_rows(&[x, o]);
                let cols = t.concat_cols(&[x, o]);
                let a = t.slice_rows(rows, 1, 2);
                let b = t.slice_cols(cols, 2, 3);
                let g = t.gather_rows(x, &[1, 1, 0]);
                let m = t.mean_rows(g);
                let bias = t.add_row(b, m);
                let s = t.sum(&[a, bias]);
                let sc = t.scale(s, 0.7);
                weighted_sum(t, sc, 14)
            },
            rand(2, 3, 15),
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let c = t.constant(rand(2, 2, 1));
        let p = t.param(rand(2, 2, 2));
        let y = t.matmul(c, p);
        let loss = t.cross_entropy(y, &[0, 1]);
        let grads = t.backward(loss);
        assert!(grads.get(c).is_none());
        assert!(grads.get(p).is_some());
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Matrix::zeros(3, 7));
        let l = t.cross_entropy(x, &[0, 3, 6]);
        assert!((t.value(l).to_scalar() - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.3, 2.0] {
            let eps = 1e-6;
            let numeric =
                (Activation::Gelu.apply(x + eps) - Activation::Gelu.apply(x - eps)) / (2.0 * eps);
            assert!((Activation::Gelu.derivative(x) - numeric).abs() < 1e-8);
        }
    }
}
