//! Reverse-mode differentiation over a recorded forward pass.
//!
//! Every operation on a [`Graph`] computes its value eagerly and appends a
//! node; [`Graph::backward`] walks the nodes in reverse. Nodes that do not
//! depend on any parameter are skipped.

use super::losses::{bce_grad, bce_value, focal_grad, focal_value};
use super::{NumericError, Tensor};

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
    Linear { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    PairAggregate { alpha: Var, msg: Var },
    Mean(Var),
    Bce { p: Var, target: Tensor },
    Focal {
        p: Var,
        target: Tensor,
        alpha: f64,
        gamma: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

/// Gradients of a scalar with respect to every node of the graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.push(v);
        v
    }

    /// Parameters in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `x . w^T + b` with `w: [out x in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericError> {
        let y = self
            .value(x)
            .matmul_t(self.value(w))?
            .add_row_vector(self.value(b))?;
        Ok(self.push(y, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let y = self.value(a).matmul(self.value(b))?;
        Ok(self.push(y, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let y = self.value(a).add(self.value(b))?;
        Ok(self.push(y, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let y = self.value(a).sub(self.value(b))?;
        Ok(self.push(y, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let y = self.value(a).mul(self.value(b))?;
        Ok(self.push(y, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.value(a).scale(c);
        self.push(y, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.value(a).relu();
        self.push(y, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let y = self.value(a).leaky_relu(slope);
        self.push(y, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).sigmoid();
        self.push(y, Op::Sigmoid(a), &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let y = self.value(a).softmax();
        self.push(y, Op::Softmax(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let y = Tensor::concat_cols(&tensors)?;
        Ok(self.push(y, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumericError> {
        let y = self.value(a).gather_rows(indices)?;
        Ok(self.push(y, Op::GatherRows(a, indices.to_vec()), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericError> {
        let y = self.value(a).reshape(shape)?;
        Ok(self.push(y, Op::Reshape(a), &[a]))
    }

    /// `out[i] = sum_j alpha[i, j] * msg[i * n + j]` for `alpha: [n x n]`
    /// and `msg: [n*n x d]`.
    pub fn pair_aggregate(&mut self, alpha: Var, msg: Var) -> Result<Var, NumericError> {
        let a = self.value(alpha);
        let m = self.value(msg);
        let n = a.rows();
        if a.shape() != [n, n] || m.rows() != n * n {
            return Err(NumericError::ShapeMismatch {
                op: "pair_aggregate",
                left: a.shape().to_vec(),
                right: m.shape().to_vec(),
            });
        }
        let d = m.cols();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let o = &mut out[i * d..(i + 1) * d];
            for j in 0..n {
                let w = a.data()[i * n + j];
                for (ov, mv) in o.iter_mut().zip(m.row(i * n + j)) {
                    *ov += w * mv;
                }
            }
        }
        let y = Tensor::new(vec![n, d], out)?;
        Ok(self.push(y, Op::PairAggregate { alpha, msg }, &[alpha, msg]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let y = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(y, Op::Mean(a), &[a])
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`
    /// (same shape, values in `[0, 1]`).
    pub fn bce(&mut self, p: Var, target: &Tensor) -> Result<Var, NumericError> {
        let y = Tensor::scalar(bce_value(self.value(p), target)?);
        Ok(self.push(
            y,
            Op::Bce {
                p,
                target: target.clone(),
            },
            &[p],
        ))
    }

    /// Mean focal loss with binary `target`.
    pub fn focal(
        &mut self,
        p: Var,
        target: &Tensor,
        alpha: f64,
        gamma: f64,
    ) -> Result<Var, NumericError> {
        let y = Tensor::scalar(focal_value(self.value(p), target, alpha, gamma)?);
        Ok(self.push(
            y,
            Op::Focal {
                p,
                target: target.clone(),
                alpha,
                gamma,
            },
            &[p],
        ))
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NumericError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        g: Tensor,
    ) -> Result<(), NumericError> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(
        &self,
        idx: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), NumericError> {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let dx = g.matmul(wv)?.reshape(xv.shape())?;
                let dw = g.transpose().matmul(xv)?.reshape(wv.shape())?;
                let cols = g.cols();
                let mut db = vec![0.0; cols];
                for row in g.data().chunks(cols) {
                    for (a, v) in db.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                let db = Tensor::new(self.value(*b).shape().to_vec(), db)?;
                self.accumulate(grads, *x, dx)?;
                self.accumulate(grads, *w, dw)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let g2 = g.reshape(&[av.rows(), g.len() / av.rows()])?;
                let b2 = bv.reshape(&[av.cols(), bv.len() / av.cols()])?;
                let da = g2.matmul_t(&b2)?.reshape(av.shape())?;
                let db = av.transpose().matmul(&g2)?.reshape(bv.shape())?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                let da = g.mul(self.value(*b))?;
                let db = g.mul(self.value(*a))?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.scale(*c))?,
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, *a, d)?;
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let d = g.zip_map(self.value(*a), "leaky_relu", |gv, x| {
                    if x > 0.0 {
                        gv
                    } else {
                        s * gv
                    }
                })?;
                self.accumulate(grads, *a, d)?;
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(out, "sigmoid", |gv, s| gv * s * (1.0 - s))?;
                self.accumulate(grads, *a, d)?;
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                let mut d = vec![0.0; out.len()];
                for ((drow, srow), grow) in d
                    .chunks_mut(cols)
                    .zip(out.data().chunks(cols))
                    .zip(g.data().chunks(cols))
                {
                    let dot: f64 = srow.iter().zip(grow).map(|(s, gv)| s * gv).sum();
                    for ((dv, s), gv) in drow.iter_mut().zip(srow).zip(grow) {
                        *dv = s * (gv - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?)?;
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let c = pv.cols();
                    let mut d = Vec::with_capacity(pv.len());
                    for r in 0..rows {
                        d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                    }
                    offset += c;
                    self.accumulate(grads, p, Tensor::new(pv.shape().to_vec(), d)?)?;
                }
            }
            Op::GatherRows(a, indices) => {
                let av = self.value(*a);
                let cols = av.cols();
                let mut d = vec![0.0; av.len()];
                for (k, &i) in indices.iter().enumerate() {
                    for (dv, gv) in d[i * cols..(i + 1) * cols].iter_mut().zip(g.row(k)) {
                        *dv += gv;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d)?)?;
            }
            Op::Reshape(a) => {
                let d = g.reshape(self.value(*a).shape())?;
                self.accumulate(grads, *a, d)?;
            }
            Op::PairAggregate { alpha, msg } => {
                let av = self.value(*alpha);
                let mv = self.value(*msg);
                let n = av.rows();
                let d = mv.cols();
                let mut da = vec![0.0; n * n];
                let mut dm = vec![0.0; n * n * d];
                for i in 0..n {
                    let gi = g.row(i);
                    for j in 0..n {
                        let e = i * n + j;
                        da[e] = gi.iter().zip(mv.row(e)).map(|(x, y)| x * y).sum();
                        let w = av.data()[e];
                        for (dv, gv) in dm[e * d..(e + 1) * d].iter_mut().zip(gi) {
                            *dv = w * gv;
                        }
                    }
                }
                self.accumulate(grads, *alpha, Tensor::new(av.shape().to_vec(), da)?)?;
                self.accumulate(grads, *msg, Tensor::new(mv.shape().to_vec(), dm)?)?;
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let d = Tensor::filled(av.shape(), g.item() / av.len() as f64);
                self.accumulate(grads, *a, d)?;
            }
            Op::Bce { p, target } => {
                let d = bce_grad(self.value(*p), target)?.scale(g.item());
                self.accumulate(grads, *p, d)?;
            }
            Op::Focal {
                p,
                target,
                alpha,
                gamma,
            } => {
                let d = focal_grad(self.value(*p), target, *alpha, *gamma)?.scale(g.item());
                self.accumulate(grads, *p, d)?;
            }
        }
        Ok(())
    }
}
