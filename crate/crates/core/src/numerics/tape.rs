//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive in evaluation order, so the node list
//! is already topologically sorted. [`Tape::backward`] walks it once in
//! reverse, accumulating adjoints. Shape mismatches panic at record time.

use std::sync::Arc;

use super::tensor::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Inputs to `ln` are clamped to this value so losses never reach `-inf`.
/// The clamped region has zero gradient.
pub const LOG_FLOOR: f64 = 1e-300;

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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
    Select(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SpMM(Arc<SparseMatrix>, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of a scalar output with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient for `v`; nodes the output does not depend on get zeros.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    /// Records a leaf: a parameter or a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the `1 x n` row `bias` to every row of `a`. This is the only
    /// broadcasting the tape supports.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(bias);
        assert!(
            bv.rows() == 1 && bv.cols() == av.cols(),
            "add_row expects a 1x{} bias, got {:?}",
            av.cols(),
            bv.shape()
        );
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_slice_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// `a + c` elementwise.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Guarded natural log: `ln(max(x, LOG_FLOOR))`.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        self.push(v, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).softmax_rows();
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).log_softmax_rows();
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let v = self.value(a).gather_rows(indices);
        self.push(v, Op::Gather(a, indices.to_vec()))
    }

    /// Picks column `cols[r]` from row `r`, producing an `n x 1` column.
    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), cols.len(), "select_cols needs one column per row");
        let data = cols
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < av.cols(), "select_cols column {c} out of range");
                av.get(r, c)
            })
            .collect();
        let v = Tensor::new(cols.len(), 1, data);
        self.push(v, Op::Select(a, cols.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert!(!av.is_empty(), "mean of empty tensor");
        let v = Tensor::scalar(av.sum() / av.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Multiplies a constant sparse matrix into `x`.
    pub fn spmm(&mut self, m: &Arc<SparseMatrix>, x: Var) -> Var {
        let v = m.mul_dense(self.value(x));
        self.push(v, Op::SpMM(Arc::clone(m), x))
    }

    /// Back-propagates from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let shape = self.value(output).shape();
        if shape != [1, 1] {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                // Leaves keep their adjoint so callers can read it.
                Op::Leaf => grads[idx] = Some(dy),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, dy.matmul(&bv.transpose()));
                    accumulate(&mut grads, *b, av.transpose().matmul(&dy));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, dy.map(|g| -g));
                    accumulate(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, dy.zip_map(bv, |g, x| g * x));
                    accumulate(&mut grads, *b, dy.zip_map(av, |g, x| g * x));
                }
                Op::AddRow(a, bias) => {
                    let mut db = Tensor::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (d, g) in db.data_mut().iter_mut().zip(dy.row_slice(r)) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, dy);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, dy.map(|g| g * c));
                }
                Op::Offset(a) => accumulate(&mut grads, *a, dy),
                Op::Exp(a) => accumulate(&mut grads, *a, dy.zip_map(y, |g, e| g * e)),
                Op::Log(a) => {
                    let x = self.value(*a);
                    let dx = dy.zip_map(x, |g, x| if x > LOG_FLOOR { g / x } else { 0.0 });
                    accumulate(&mut grads, *a, dx);
                }
                Op::Tanh(a) => accumulate(&mut grads, *a, dy.zip_map(y, |g, t| g * (1.0 - t * t))),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, dy.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, dy.zip_map(x, |g, x| 2.0 * g * x));
                }
                Op::Softmax(a) => {
                    // dx = y * (dy - <dy, y>) per row
                    let mut dx = dy.clone();
                    for r in 0..dx.rows() {
                        let yr = y.row_slice(r);
                        let dot: f64 = dy.row_slice(r).iter().zip(yr).map(|(g, p)| g * p).sum();
                        for (d, &p) in dx.row_slice_mut(r).iter_mut().zip(yr) {
                            *d = p * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::LogSoftmax(a) => {
                    // dx = dy - softmax * sum(dy) per row
                    let mut dx = dy.clone();
                    for r in 0..dx.rows() {
                        let total: f64 = dy.row_slice(r).iter().sum();
                        for (d, &ly) in dx.row_slice_mut(r).iter_mut().zip(y.row_slice(r)) {
                            *d -= ly.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Gather(a, indices) => {
                    let src = self.value(*a);
                    let mut dx = Tensor::zeros(src.rows(), src.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, g) in dx.row_slice_mut(i).iter_mut().zip(dy.row_slice(r)) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Select(a, cols) => {
                    let src = self.value(*a);
                    let mut dx = Tensor::zeros(src.rows(), src.cols());
                    for (r, &c) in cols.iter().enumerate() {
                        dx.set(r, c, dy.get(r, 0));
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, dy.transpose()),
                Op::Sum(a) => {
                    let [r, c] = self.value(*a).shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, dy.item()));
                }
                Op::Mean(a) => {
                    let [r, c] = self.value(*a).shape();
                    let g = dy.item() / (r * c) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g));
                }
                Op::SpMM(m, x) => accumulate(&mut grads, *x, m.transpose_mul_dense(&dy)),
            }
        }

        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
