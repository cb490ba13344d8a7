//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Forward operations append nodes in execution order, so insertion order is
//! already a topological order and the backward sweep is a single reverse
//! scan. Only nodes reachable from a parameter leaf carry gradients; constant
//! subgraphs are skipped during the sweep.

use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar loss with respect to every parameter leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a parameter leaf, `None` for anything else.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
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

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// A leaf that receives gradients on [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Copies `v` into a fresh constant leaf, stopping gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn is_param(&self, v: Var) -> bool {
        self.nodes[v.0].param
    }

    fn push_leaf(&mut self, value: Tensor, param: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: param,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::Scale(a, _)
            | Op::ScaleRows(a, _)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::SumSquares(a) => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    /// `x + bias` with `bias` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(bias))?;
        self.push(value, Op::AddRow(x, bias), "add_row")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c), "scale")
    }

    /// Multiplies row `i` of `a` by `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if factors.len() != x.rows() {
            return Err(Error::dim("scale_rows", &[x.rows()], &[factors.len()]));
        }
        let mut value = x.clone();
        for (i, f) in factors.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        self.push(value, Op::ScaleRows(a, factors), "scale_rows")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a), "relu")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), "sum")
    }

    /// Squared Frobenius norm, a scalar.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum_squares());
        self.push(value, Op::SumSquares(a), "sum_squares")
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Only nodes at or before `loss` are visited, so several losses built on
    /// one tape can be differentiated independently.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut adj);
        }

        let grads = (0..self.nodes.len())
            .map(|i| {
                let node = &self.nodes[i];
                if !node.param {
                    return None;
                }
                let data = adj
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                Some(Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    matmul_nt_into(g, bv.data(), slot(adj, *a, m * k), m, n, k);
                }
                if self.wants(*b) {
                    matmul_tn_into(av.data(), g, slot(adj, *b, k * n), m, k, n);
                }
            }
            Op::AddRow(x, bias) => {
                if self.wants(*x) {
                    accumulate(slot(adj, *x, g.len()), g);
                }
                if self.wants(*bias) {
                    let cols = self.value(*bias).numel();
                    let out = slot(adj, *bias, cols);
                    for r in g.chunks(cols.max(1)) {
                        accumulate(out, r);
                    }
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(slot(adj, *a, g.len()), g);
                }
                if self.wants(*b) {
                    accumulate(slot(adj, *b, g.len()), g);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(slot(adj, *a, g.len()), g);
                }
                if self.wants(*b) {
                    let out = slot(adj, *b, g.len());
                    out.iter_mut().zip(g).for_each(|(o, gi)| *o -= gi);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let out = slot(adj, *a, g.len());
                    for ((o, gi), bi) in out.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if self.wants(*b) {
                    let out = slot(adj, *b, g.len());
                    for ((o, gi), ai) in out.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, c) => {
                let out = slot(adj, *a, g.len());
                out.iter_mut().zip(g).for_each(|(o, gi)| *o += c * gi);
            }
            Op::ScaleRows(a, factors) => {
                let cols = self.value(*a).cols();
                let out = slot(adj, *a, g.len());
                for (i, f) in factors.iter().enumerate() {
                    let range = i * cols..(i + 1) * cols;
                    for (o, gi) in out[range.clone()].iter_mut().zip(&g[range]) {
                        *o += f * gi;
                    }
                }
            }
            Op::Tanh(a) => {
                // d tanh = 1 - tanh², using the saved output.
                let y = node.value.data();
                let out = slot(adj, *a, g.len());
                for ((o, gi), yi) in out.iter_mut().zip(g).zip(y) {
                    *o += gi * (1.0 - yi * yi);
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let out = slot(adj, *a, g.len());
                for ((o, gi), xi) in out.iter_mut().zip(g).zip(x) {
                    if *xi > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::Sum(a) => {
                let len = self.value(*a).numel();
                slot(adj, *a, len).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::SumSquares(a) => {
                let x = self.value(*a).data();
                let out = slot(adj, *a, x.len());
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += 2.0 * xi * g[0];
                }
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(out: &mut [f64], g: &[f64]) {
    out.iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
}
