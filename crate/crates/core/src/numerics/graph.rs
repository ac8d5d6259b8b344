//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every op appends a node holding its output and
//! enough information to push gradients back to its inputs. Graphs are
//! built per window and discarded after the backward pass.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, RowStats};
use crate::numerics::{ParamStore, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for ops defined outside this module.
pub trait Function<F: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// Returns one gradient buffer per input, in input order.
    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad_out: &[F]) -> Vec<Vec<F>>;
}

enum Op<F: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    MaskMul(Var, Vec<F>),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    RowSoftmax(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Reshape(Var),
    Mse(Var, Vec<F>),
    Sum(Var),
    SumSquares(Var),
    Custom(Vec<Var>, Box<dyn Function<F>>),
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Graph<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
    params: BTreeMap<String, Var>,
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::InvalidShape(format!("{op}: {detail}"))
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            other => self.parents(other).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op<F>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::MaskMul(a, _)
            | Op::Gelu(a)
            | Op::RowSoftmax(a)
            | Op::Transpose(a)
            | Op::SliceRows(a, _)
            | Op::Reshape(a)
            | Op::Mse(a, _)
            | Op::Sum(a)
            | Op::SumSquares(a) => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::ConcatCols(vs) | Op::Custom(vs, _) => vs.clone(),
        }
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    /// Trainable leaf bound to `store[name]`. Repeated calls with the same
    /// name return the same node.
    pub fn param(&mut self, store: &ParamStore<F>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.get(name)?.clone();
        let v = self.push(value, Op::Leaf, "param")?;
        self.nodes[v.0].needs_grad = true;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, w) = (self.value(a), self.value(b));
        if x.shape().len() != 2 || w.shape().len() != 2 || x.cols() != w.rows() {
            return Err(shape_err("matmul", format!("{:?} x {:?}", x.shape(), w.shape())));
        }
        let out = matmul_raw(x.data(), w.data(), x.rows(), x.cols(), w.cols());
        let value = Tensor::new(vec![x.rows(), w.cols()], out)?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "sub", |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    fn zip_same(&self, a: Var, b: Var, op: &str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    /// Adds a length-`n` vector to every row of an `[m x n]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.len() != x.cols() {
            return Err(shape_err("add_row", format!("{:?} + {:?}", x.shape(), b.shape())));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (v, &bb) in value.row_mut(i).iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        self.push(value, Op::AddRow(a, bias), "add_row")
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(value, Op::Scale(a, factor), "scale")
    }

    /// `a * factor + shift` with constant scalars.
    pub fn affine(&mut self, a: Var, factor: F, shift: F) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|v| *v = *v * factor + shift);
        self.push(value, Op::Scale(a, factor), "affine")
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Vec<F>) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(shape_err("mask_mul", format!("{} vs {}", mask.len(), x.len())));
        }
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(value, Op::MaskMul(a, mask), "dropout")
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| kernels::gelu(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(value, Op::Gelu(a), "gelu")
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, g, b) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if d == 0 || g.len() != d || b.len() != d {
            return Err(shape_err("layer_norm", format!("{:?} / {:?}", xv.shape(), g.shape())));
        }
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.len());
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let stats = RowStats::of(row, eps);
            rstd.push(stats.rstd);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - stats.mean) * stats.rstd;
                xhat.push(h);
                out.push(g.data()[j] * h + b.data()[j]);
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            "layer_norm",
        )
    }

    /// Softmax within each row. With `causal`, row `t` is normalized over
    /// columns `0..=t` and the rest are exactly zero.
    pub fn row_softmax(&mut self, a: Var, causal: bool) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        let mut out = vec![F::zero(); x.len()];
        for i in 0..x.rows() {
            let end = if causal { (i + 1).min(n) } else { n };
            let probs = kernels::stable_softmax(&x.row(i)[..end])?;
            out[i * n..i * n + end].copy_from_slice(&probs);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push(value, Op::RowSoftmax(a), "row_softmax")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), "transpose")
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::new(vec![rows, total], out)?;
        self.push(value, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(shape_err(
                "slice_rows",
                format!("rows {start}..{} of {}", start + len, x.rows()),
            ));
        }
        let c = x.cols();
        let data = x.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::new(vec![len, c], data)?;
        self.push(value, Op::SliceRows(a, start), "slice_rows")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push(value, Op::Reshape(a), "reshape")
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<F>) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || p.is_empty() {
            return Err(shape_err("mse", format!("{:?} vs {:?}", p.shape(), target.shape())));
        }
        let n = F::of(p.len() as f64);
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>()
            / n;
        self.push(Tensor::scalar(loss), Op::Mse(pred, target.data().to_vec()), "mse")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a), "sum")
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().map(|&v| v * v).sum();
        self.push(Tensor::scalar(total), Op::SumSquares(a), "sum_squares")
    }

    /// Registers an op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor<F>,
        function: Box<dyn Function<F>>,
    ) -> Result<Var> {
        let name = function.name();
        self.push(value, Op::Custom(inputs.to_vec(), function), name)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", "loss must be a scalar".into()));
        }
        if !self.scalar(loss).is_finite() {
            return Err(Error::NonFiniteLoss { batch: None });
        }
        let Self { nodes, grads, .. } = self;
        grads.clear();
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let mut send = |v: Var, g: Vec<F>| {
                if !nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (x, w) = (val(*a), val(*b));
                    let (m, k, n) = (x.rows(), x.cols(), w.cols());
                    // dX = dY W^T, dW = X^T dY
                    let mut dx = vec![F::zero(); m * k];
                    for r in 0..m {
                        for c in 0..n {
                            let g = gout[r * n + c];
                            if g == F::zero() {
                                continue;
                            }
                            for t in 0..k {
                                dx[r * k + t] += g * w.data()[t * n + c];
                            }
                        }
                    }
                    let xt = x.transpose();
                    let dw = matmul_raw(xt.data(), &gout, k, m, n);
                    send(*a, dx);
                    send(*b, dw);
                }
                Op::Add(a, b) => {
                    send(*a, gout.clone());
                    send(*b, gout);
                }
                Op::Sub(a, b) => {
                    send(*b, gout.iter().map(|&g| -g).collect());
                    send(*a, gout);
                }
                Op::Mul(a, b) => {
                    let da = gout.iter().zip(val(*b).data()).map(|(&g, &y)| g * y).collect();
                    let db = gout.iter().zip(val(*a).data()).map(|(&g, &x)| g * x).collect();
                    send(*a, da);
                    send(*b, db);
                }
                Op::AddRow(a, b) => {
                    let n = val(*b).len();
                    let mut db = vec![F::zero(); n];
                    for (j, &g) in gout.iter().enumerate() {
                        db[j % n] += g;
                    }
                    send(*a, gout);
                    send(*b, db);
                }
                Op::Scale(a, f) => send(*a, gout.iter().map(|&g| g * *f).collect()),
                Op::MaskMul(a, mask) => {
                    send(*a, gout.iter().zip(mask).map(|(&g, &m)| g * m).collect())
                }
                Op::Gelu(a) => {
                    let dx = gout
                        .iter()
                        .zip(val(*a).data())
                        .map(|(&g, &x)| g * kernels::gelu_grad(x))
                        .collect();
                    send(*a, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gam = val(*gamma).data();
                    let d = gam.len();
                    let rows = xhat.len() / d;
                    let nd = F::of(d as f64);
                    let mut dx = vec![F::zero(); xhat.len()];
                    let mut dg = vec![F::zero(); d];
                    let mut db = vec![F::zero(); d];
                    for r in 0..rows {
                        let base = r * d;
                        let mut mean_dh = F::zero();
                        let mut mean_dh_h = F::zero();
                        for j in 0..d {
                            let g = gout[base + j];
                            dg[j] += g * xhat[base + j];
                            db[j] += g;
                            let dh = g * gam[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[base + j];
                        }
                        mean_dh /= nd;
                        mean_dh_h /= nd;
                        for j in 0..d {
                            let dh = gout[base + j] * gam[j];
                            dx[base + j] = rstd[r] * (dh - mean_dh - xhat[base + j] * mean_dh_h);
                        }
                    }
                    send(*x, dx);
                    send(*gamma, dg);
                    send(*beta, db);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let n = y.cols();
                    let mut dx = vec![F::zero(); y.len()];
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &gout[r * n..(r + 1) * n];
                        let dot: F = kernels::dot(yr, gr);
                        for j in 0..n {
                            dx[r * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    send(*a, dx);
                }
                Op::Transpose(a) => {
                    let (m, n) = (node.value.rows(), node.value.cols());
                    let g = Tensor::new(vec![m, n], gout)?.transpose();
                    send(*a, g.into_data());
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = val(p).cols();
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&gout[r * total + offset..r * total + offset + c]);
                        }
                        offset += c;
                        send(p, gp);
                    }
                }
                Op::SliceRows(a, start) => {
                    let x = val(*a);
                    let c = x.cols();
                    let mut g = vec![F::zero(); x.len()];
                    g[start * c..start * c + gout.len()].copy_from_slice(&gout);
                    send(*a, g);
                }
                Op::Reshape(a) => send(*a, gout),
                Op::Mse(a, target) => {
                    let p = val(*a).data();
                    let scale = F::of(2.0) * gout[0] / F::of(p.len() as f64);
                    send(*a, p.iter().zip(target).map(|(&x, &t)| scale * (x - t)).collect());
                }
                Op::Sum(a) => send(*a, vec![gout[0]; val(*a).len()]),
                Op::SumSquares(a) => {
                    let two = F::of(2.0) * gout[0];
                    send(*a, val(*a).data().iter().map(|&x| two * x).collect());
                }
                Op::Custom(inputs, function) => {
                    let values: Vec<&Tensor<F>> = inputs.iter().map(|&v| val(v)).collect();
                    let gs = function.backward(&values, &node.value, &gout);
                    for (&v, g) in inputs.iter().zip(gs) {
                        send(v, g);
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of every bound parameter into the store's buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<F>) -> Result<()> {
        for (name, &v) in &self.params {
            if let Some(g) = self.grad(v) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    /// `(name, gradient)` for every bound parameter that received one.
    pub fn param_grads(&self) -> Vec<(String, Vec<F>)> {
        self.params
            .iter()
            .filter_map(|(name, &v)| self.grad(v).map(|g| (name.clone(), g.to_vec())))
            .collect()
    }
}

pub(crate) fn matmul_raw<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a[i * k + t];
            if av == F::zero() {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (k, v) in entries {
            s.insert(*k, v.clone());
        }
        s
    }

    #[test]
    fn linear_forward_examples() {
        let s = store(&[
            ("w", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]])),
            ("b", Tensor::vector(vec![0.0, 0.0])),
            ("b1", Tensor::vector(vec![1.0, 1.0])),
        ]);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        let w = g.param(&s, "w").unwrap();
        let b = g.param(&s, "b").unwrap();
        let xw = g.matmul(x, w).unwrap();
        let y = g.add_row(xw, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 1.0]])).unwrap();
        let w = g.param(&s, "w").unwrap();
        let b = g.param(&s, "b1").unwrap();
        let xw = g.matmul(x, w).unwrap();
        let y = g.add_row(xw, b).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 7.0]);
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.grad(b).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(g.matmul(a, b), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn non_finite_is_eager() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::vector(vec![f32::MAX, 1.0])).unwrap();
        assert!(matches!(g.scale(a, 10.0), Err(Error::NonFinite { op: "scale" })));
    }

    #[test]
    fn causal_softmax_zeroes_future() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[3, 3])).unwrap();
        let y = g.row_softmax(a, true).unwrap();
        let v = g.value(y);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v.row(1), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn shared_param_accumulates() {
        let s = store(&[("p", Tensor::vector(vec![3.0]))]);
        let mut g = Graph::new();
        let p = g.param(&s, "p").unwrap();
        let p2 = g.param(&s, "p").unwrap();
        assert_eq!(p, p2);
        let y = g.mul(p, p2).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[6.0]);
    }
}
