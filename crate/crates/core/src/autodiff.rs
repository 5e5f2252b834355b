//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node; node ids are handed out
//! in creation order, so the tape is already topologically sorted and
//! [`Graph::backward`] just walks it in reverse.
//!
//! ```
//! use rgi_core::autodiff::Graph;
//! use rgi_core::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let v = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
//! let loss = g.sum_squares(v);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(v).data(), &[2.0, 4.0]);
//! ```
//!
//! There is no broadcasting except through [`Graph::scalar_mul`]; shapes
//! must agree exactly or be fixed up with [`Graph::reshape`].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    ScalarMul(f64, Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Sum(Var),
    SumSquares(Var),
    AbsSum(Var),
    Reshape(Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `v`; zeros when `v` does not influence
    /// the root or is a constant.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]).expect("node shapes are valid"),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]).expect("node shapes are valid"),
        }
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

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that is trainable iff `trainable`.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.push(value, Op::Leaf, trainable)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul_elementwise(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Matrix product; rank-1 operands act as column vectors, output is rank 2.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, c: f64, a: Var) -> Var {
        let value = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(value, Op::ScalarMul(c, a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_squares());
        let rg = self.rg(a);
        self.push(value, Op::SumSquares(a), rg)
    }

    pub fn abs_sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).abs_sum());
        let rg = self.rg(a);
        self.push(value, Op::AbsSum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Elementwise clamp to `[lo, hi]`. The gradient passes through on the
    /// closed interval and is zero outside it.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidArgument(format!("clamp bounds [{lo}, {hi}]")));
        }
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        let rg = self.rg(a);
        Ok(self.push(value, Op::Clamp(a, lo, hi), rg))
    }

    /// Reverse pass from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0)?);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(upstream);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, b, upstream.clone())?;
                    self.accumulate(&mut grads, a, upstream)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, b, upstream.scale(-1.0))?;
                    self.accumulate(&mut grads, a, upstream)?;
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let ga = upstream.mul(self.value(b))?;
                        self.accumulate(&mut grads, a, ga)?;
                    }
                    if self.rg(b) {
                        let gb = upstream.mul(self.value(a))?;
                        self.accumulate(&mut grads, b, gb)?;
                    }
                }
                Op::MatMul(a, b) => {
                    // C = A·B  ⇒  dA = dC·Bᵀ, dB = Aᵀ·dC
                    if self.rg(a) {
                        let ga = upstream.matmul(&self.value(b).transpose()?)?;
                        let ga = ga.reshape(self.value(a).shape())?;
                        self.accumulate(&mut grads, a, ga)?;
                    }
                    if self.rg(b) {
                        let gb = self.value(a).t_matmul(&upstream)?;
                        let gb = gb.reshape(self.value(b).shape())?;
                        self.accumulate(&mut grads, b, gb)?;
                    }
                }
                Op::ScalarMul(c, a) => {
                    self.accumulate(&mut grads, a, upstream.scale(c))?;
                }
                Op::Tanh(a) => {
                    let g = upstream.zip_with(&node.value, "tanh", |u, y| u * (1.0 - y * y))?;
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::LeakyRelu(a, slope) => {
                    let g = upstream.zip_with(self.value(a), "leaky_relu", |u, x| {
                        if x > 0.0 {
                            u
                        } else {
                            slope * u
                        }
                    })?;
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::Sum(a) => {
                    let u = upstream.item();
                    let g = self.value(a).map(|_| u);
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::SumSquares(a) => {
                    let u = upstream.item();
                    let g = self.value(a).map(|x| 2.0 * x * u);
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::AbsSum(a) => {
                    let u = upstream.item();
                    let g = self.value(a).map(|x| {
                        if x > 0.0 {
                            u
                        } else if x < 0.0 {
                            -u
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::Reshape(a) => {
                    let g = upstream.reshape(self.value(a).shape())?;
                    self.accumulate(&mut grads, a, g)?;
                }
                Op::Clamp(a, lo, hi) => {
                    let g = upstream.zip_with(self.value(a), "clamp", |u, x| {
                        if (lo..=hi).contains(&x) {
                            u
                        } else {
                            0.0
                        }
                    })?;
                    self.accumulate(&mut grads, a, g)?;
                }
            }
        }

        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.rg(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
}

/// Central-difference estimate of ∇f at `at`, one coordinate at a time.
pub fn finite_difference_gradient<F>(mut f: F, at: &Tensor, step: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut probe = at.clone();
    let mut out = at.zeros_like();
    for i in 0..at.len() {
        let x0 = at.data()[i];
        probe.data_mut()[i] = x0 + step;
        let fp = f(&probe)?;
        probe.data_mut()[i] = x0 - step;
        let fm = f(&probe)?;
        probe.data_mut()[i] = x0;
        out.data_mut()[i] = (fp - fm) / (2.0 * step);
    }
    Ok(out)
}

/// Largest elementwise `|g − fd| / max(|g|, floor)`.
pub fn max_relative_error(grad: &Tensor, fd: &Tensor, floor: f64) -> Result<f64> {
    grad.check_same_shape(fd, "max_relative_error")?;
    Ok(grad
        .data()
        .iter()
        .zip(fd.data())
        .map(|(g, d)| (g - d).abs() / g.abs().max(floor))
        .fold(0.0, f64::max))
}
