//! Reverse-mode gradient tape over matrix-valued nodes.
//!
//! A [`Graph`] is rebuilt for every training step. Constants (word vectors,
//! projection matrices held fixed) never receive gradients; parameters are
//! registered with [`Graph::param`] and their gradients come back from
//! [`Graph::backward`] in registration order.

use super::tensor::{Dtype, Tensor};
use super::sigmoid;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Column(Var, usize),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    MeanCols(Var),
    Transpose(Var),
    NormalizeCols(Var),
    DivScalar(Var, Var),
    Sum(Var),
    PairSoftmaxXent {
        logits: Var,
        pairs: Vec<(usize, usize)>,
        scale: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Var>,
    dtype: Dtype,
}

impl Graph {
    pub fn new(dtype: Dtype) -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            dtype,
        }
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

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Param, true);
        self.params.push(v);
        v
    }

    fn push(&mut self, mut value: Tensor, op: Op, needs_grad: bool) -> Var {
        value.round_to(self.dtype);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    /// `1 - a`, element-wise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 - x);
        let ng = self.needs(a);
        self.push(value, Op::OneMinus(a), ng)
    }

    /// Column `j` of a matrix as an `r x 1` node.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let t = self.value(a);
        if !t.is_matrix() || j >= t.cols() {
            return Err(Error::Dimension(format!(
                "column {j} of shape {:?}",
                t.shape()
            )));
        }
        let value = Tensor::column_vector(&t.column(j));
        let ng = self.needs(a);
        Ok(self.push(value, Op::Column(a, j), ng))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("hcat of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut columns = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if !t.is_matrix() || t.rows() != rows {
                return Err(Error::Dimension(format!(
                    "hcat of shape {:?} with {rows} rows",
                    t.shape()
                )));
            }
            columns.extend(t.columns());
        }
        let value = Tensor::from_columns(&columns)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::HCat(parts.to_vec()), ng))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn vcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("vcat of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if !t.is_matrix() || t.cols() != cols {
                return Err(Error::Dimension(format!(
                    "vcat of shape {:?} with {cols} columns",
                    t.shape()
                )));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::VCat(parts.to_vec()), ng))
    }

    /// Mean over columns, giving an `r x 1` node.
    pub fn mean_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if !t.is_matrix() {
            return Err(Error::Dimension("mean_cols expects a matrix".into()));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; r];
        for (i, o) in out.iter_mut().enumerate() {
            *o = t.data()[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64;
        }
        let value = Tensor::column_vector(&out);
        let ng = self.needs(a);
        Ok(self.push(value, Op::MeanCols(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let ng = self.needs(a);
        Ok(self.push(value, Op::Transpose(a), ng))
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if !t.is_matrix() {
            return Err(Error::Dimension("normalize_cols expects a matrix".into()));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut value = t.clone();
        for j in 0..c {
            let n = (0..r).map(|i| t.at(i, j).powi(2)).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::DegenerateVector(format!(
                    "column {j} has zero norm"
                )));
            }
            for i in 0..r {
                value.set(i, j, t.at(i, j) / n);
            }
        }
        let ng = self.needs(a);
        Ok(self.push(value, Op::NormalizeCols(a), ng))
    }

    /// `a / s` for a one-element node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Dimension("divisor must be a scalar".into()));
        }
        let d = self.scalar(s);
        if d == 0.0 {
            return Err(Error::Numeric("division by zero".into()));
        }
        let value = self.value(a).map(|x| x / d);
        let ng = self.needs(a) || self.needs(s);
        Ok(self.push(value, Op::DivScalar(a, s), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Cosine similarity of two column vectors, as a one-element node.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let na = self.normalize_cols(a)?;
        let nb = self.normalize_cols(b)?;
        let at = self.transpose(na)?;
        let prod = self.matmul(at, nb)?;
        Ok(self.sum(prod))
    }

    /// `scale * Σ_{(i,j) ∈ pairs} −log softmax(logits[i, ·])[j]`.
    ///
    /// The softmax of each anchor row `i` runs over every column of `logits`.
    pub fn pair_softmax_xent(
        &mut self,
        logits: Var,
        pairs: &[(usize, usize)],
        scale: f64,
    ) -> Result<Var> {
        let t = self.value(logits);
        if !t.is_matrix() {
            return Err(Error::Dimension("logits must be a matrix".into()));
        }
        let (r, c) = (t.rows(), t.cols());
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= r || j >= c) {
            return Err(Error::Dimension(format!(
                "pair ({i},{j}) outside {r}x{c} logits"
            )));
        }
        let lse = row_logsumexp(t);
        let loss: f64 = pairs.iter().map(|&(i, j)| lse[i] - t.at(i, j)).sum();
        let value = Tensor::scalar(scale * loss);
        let ng = self.needs(logits);
        Ok(self.push(
            value,
            Op::PairSoftmaxXent {
                logits,
                pairs: pairs.to_vec(),
                scale,
            },
            ng,
        ))
    }

    /// Gradients of the scalar node `loss` with respect to every registered
    /// parameter, in registration order. Disconnected parameters get zeros.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if let Op::Param = node.op {
                // Parameters are leaves; keep the accumulated gradient.
                grads[idx] = Some(g);
                continue;
            }
            let mut out: Vec<(Var, Tensor)> = Vec::new();
            let mut send = |v: Var, delta: Tensor| -> Result<()> {
                out.push((v, delta));
                Ok(())
            };
            match &node.op {
                Op::Constant => {}
                Op::Param => {}
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        send(*a, g.matmul_t(self.value(*b))?)?;
                    }
                    if self.needs(*b) {
                        send(*b, self.value(*a).t_matmul(&g)?)?;
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone())?;
                    send(*b, g)?;
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone())?;
                    send(*b, g.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        send(*a, g.hadamard(self.value(*b))?)?;
                    }
                    if self.needs(*b) {
                        send(*b, g.hadamard(self.value(*a))?)?;
                    }
                }
                Op::Scale(a, s) => send(*a, g.scale(*s))?,
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi))?)?;
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi))?)?;
                }
                Op::OneMinus(a) => send(*a, g.scale(-1.0))?,
                Op::Column(a, j) => {
                    let src = self.value(*a);
                    let mut delta = Tensor::zeros(src.shape());
                    for i in 0..src.rows() {
                        delta.set(i, *j, g.data()[i]);
                    }
                    send(*a, delta)?;
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let (r, c) = (shape[0], shape[1]);
                        if self.needs(p) {
                            let mut delta = Tensor::zeros(&shape);
                            for i in 0..r {
                                for j in 0..c {
                                    delta.set(i, j, g.at(i, offset + j));
                                }
                            }
                            send(p, delta)?;
                        }
                        offset += c;
                    }
                }
                Op::VCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let n: usize = shape.iter().product();
                        if self.needs(p) {
                            let slice = g.data()[offset..offset + n].to_vec();
                            send(p, Tensor::new(shape, slice)?)?;
                        }
                        offset += n;
                    }
                }
                Op::MeanCols(a) => {
                    let src = self.value(*a);
                    let (r, c) = (src.rows(), src.cols());
                    let mut delta = Tensor::zeros(src.shape());
                    for i in 0..r {
                        let gi = g.data()[i] / c as f64;
                        for j in 0..c {
                            delta.set(i, j, gi);
                        }
                    }
                    send(*a, delta)?;
                }
                Op::Transpose(a) => send(*a, g.transpose()?)?,
                Op::NormalizeCols(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let (r, c) = (x.rows(), x.cols());
                    let mut delta = Tensor::zeros(x.shape());
                    for j in 0..c {
                        let n = (0..r).map(|i| x.at(i, j).powi(2)).sum::<f64>().sqrt();
                        let proj: f64 = (0..r).map(|i| y.at(i, j) * g.at(i, j)).sum();
                        for i in 0..r {
                            delta.set(i, j, (g.at(i, j) - y.at(i, j) * proj) / n);
                        }
                    }
                    send(*a, delta)?;
                }
                Op::DivScalar(a, s) => {
                    let d = self.scalar(*s);
                    if self.needs(*a) {
                        send(*a, g.scale(1.0 / d))?;
                    }
                    if self.needs(*s) {
                        let num: f64 = g
                            .data()
                            .iter()
                            .zip(self.value(*a).data())
                            .map(|(gi, ai)| gi * ai)
                            .sum();
                        let shape = self.value(*s).shape().to_vec();
                        send(*s, Tensor::new(shape, vec![-num / (d * d)])?)?;
                    }
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    send(*a, Tensor::filled(&shape, g.data()[0]))?;
                }
                Op::PairSoftmaxXent {
                    logits,
                    pairs,
                    scale,
                } => {
                    let t = self.value(*logits);
                    let (r, c) = (t.rows(), t.cols());
                    let lse = row_logsumexp(t);
                    let mut anchors = vec![0usize; r];
                    let mut delta = Tensor::zeros(t.shape());
                    let k = g.data()[0] * scale;
                    for &(i, j) in pairs {
                        anchors[i] += 1;
                        delta.set(i, j, delta.at(i, j) - k);
                    }
                    for (i, &count) in anchors.iter().enumerate() {
                        if count == 0 {
                            continue;
                        }
                        for n in 0..c {
                            let p = (t.at(i, n) - lse[i]).exp();
                            delta.set(i, n, delta.at(i, n) + k * count as f64 * p);
                        }
                    }
                    send(*logits, delta)?;
                }
            }
            for (v, delta) in out {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&delta)?,
                    slot @ None => *slot = Some(delta),
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|&p| {
                grads[p.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(p).shape()))
            })
            .collect())
    }
}

/// Row-wise log-sum-exp with max subtraction.
pub(crate) fn row_logsumexp(t: &Tensor) -> Vec<f64> {
    let (r, c) = (t.rows(), t.cols());
    (0..r)
        .map(|i| {
            let row = &t.data()[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        })
        .collect()
}
