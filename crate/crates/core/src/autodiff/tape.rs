use crate::autodiff::matrix::{
    gemm_nt_acc, gemm_tn_acc, log_softmax_row, softmax_in_place, Matrix,
};
use crate::error::{Error, Result};

const TARGET_SUM_TOL: f64 = 1e-6;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Operation that produced a node.
#[derive(Clone, Debug)]
pub enum Op {
    /// Trainable input; gradients are accumulated here.
    Leaf,
    /// Non-trainable input.
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + b` with `b` a single row broadcast over the rows of `x`.
    AddRow(Var, Var),
    Relu(Var),
    Softmax(Var),
    Scale(Var, f64),
    Sum(Var),
    /// Column-wise concatenation.
    Concat(Vec<Var>),
    /// Columns `start..end`.
    Slice { src: Var, start: usize, end: usize },
    /// Forward identity; paired with `stop_grad` this is the gradient stop.
    Identity(Var),
    /// Mean over rows of `w_i * H(target_i, softmax(logits_i))`.
    CrossEntropy {
        logits: Var,
        target: Matrix,
        weights: Option<Vec<f64>>,
    },
    /// Mean over rows of `|p_i - q_i|^2`.
    Mse { p: Var, q: Matrix },
}

impl Op {
    pub fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::Relu(x) | Op::Softmax(x) | Op::Scale(x, _) | Op::Sum(x) | Op::Identity(x) => {
                vec![*x]
            }
            Op::Concat(xs) => xs.clone(),
            Op::Slice { src, .. } => vec![*src],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Mse { p, .. } => vec![*p],
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Relu(..) => "relu",
            Op::Softmax(..) => "softmax",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Identity(..) => "identity",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Mse { .. } => "mse",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValueNode {
    pub id: Var,
    pub data: Matrix,
    pub grad: Matrix,
    pub op: Op,
    /// When set, backward sends nothing to the parents of this node.
    pub stop_grad: bool,
    requires_grad: bool,
}

impl ValueNode {
    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn parents(&self) -> Vec<Var> {
        self.op.parents()
    }
}

/// Append-only computation graph. Nodes are stored in creation order, which
/// is a topological order because every op only references existing nodes.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<ValueNode>,
    seed: u64,
    frozen_stops: Vec<Matrix>,
    stops_seen: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_seed(seed: u64) -> Self {
        Tape {
            seed,
            ..Tape::default()
        }
    }

    /// A tape whose k-th `stop_gradient` call yields `values[k]` instead of its
    /// input, so stopped branches behave as constants under perturbation.
    pub fn with_frozen_stops(values: Vec<Matrix>) -> Self {
        Tape {
            frozen_stops: values,
            ..Tape::default()
        }
    }

    /// Forward values of every stop-gradient node, in creation order.
    pub fn stopped_values(&self) -> Vec<Matrix> {
        self.nodes
            .iter()
            .filter(|n| n.stop_grad)
            .map(|n| n.data.clone())
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ValueNode] {
        &self.nodes
    }

    pub fn node(&self, v: Var) -> &ValueNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].data.shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let d = &self.nodes[v.0].data;
        debug_assert_eq!(d.shape(), (1, 1));
        d.as_slice()[0]
    }

    fn push(&mut self, data: Matrix, op: Op, stop_grad: bool) -> Var {
        let requires_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            _ => !stop_grad && op.parents().iter().any(|p| self.nodes[p.0].requires_grad),
        };
        let id = Var(self.nodes.len());
        let (r, c) = data.shape();
        self.nodes.push(ValueNode {
            id,
            grad: Matrix::zeros(r, c),
            data,
            op,
            stop_grad,
            requires_grad,
        });
        id
    }

    pub fn leaf(&mut self, data: Matrix) -> Var {
        self.push(data, Op::Leaf, false)
    }

    pub fn constant(&mut self, data: Matrix) -> Var {
        self.push(data, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), false))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), false))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.0 != 1 || sb.1 != sx.1 {
            return Err(Error::Dimension {
                op: "add_row",
                left: sx,
                right: sb,
            });
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).as_slice().to_vec();
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias), false))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), false)
    }

    /// Row-wise softmax over the class dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let out = self.value(x).softmax_rows();
        self.push(out, Op::Softmax(x), false)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| v * k);
        self.push(out, Op::Scale(x, k), false)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x), false)
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Argument("concat of an empty list".into()))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.0 != rows {
                return Err(Error::Dimension {
                    op: "concat",
                    left: self.shape(first),
                    right: s,
                });
            }
            cols += s.1;
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &x in xs {
                let src = self.value(x).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(xs.to_vec()), false))
    }

    /// Columns `start..end` of `x`.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start >= end || end > cols {
            return Err(Error::Range(format!(
                "slice {start}..{end} out of bounds for {cols} columns"
            )));
        }
        let w = end - start;
        let mut out = Matrix::zeros(rows, w);
        for r in 0..rows {
            out.row_mut(r)
                .copy_from_slice(&self.value(x).row(r)[start..end]);
        }
        Ok(self.push(out, Op::Slice { src: x, start, end }, false))
    }

    /// Forward identity that blocks all gradient flow into `x`.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let k = self.stops_seen;
        self.stops_seen += 1;
        let out = match self.frozen_stops.get(k) {
            Some(v) if v.shape() == self.shape(x) => v.clone(),
            _ => self.value(x).clone(),
        };
        self.push(out, Op::Identity(x), true)
    }

    /// Mean cross-entropy between row-wise softmax of `logits` and soft `target` rows.
    pub fn cross_entropy(&mut self, logits: Var, target: &Matrix) -> Result<Var> {
        self.cross_entropy_impl(logits, target, None)
    }

    /// Like [`Tape::cross_entropy`] with a per-row weight; the mean still
    /// divides by the full row count.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        target: &Matrix,
        weights: &[f64],
    ) -> Result<Var> {
        if weights.len() != target.rows() {
            return Err(Error::Dimension {
                op: "weighted_cross_entropy",
                left: target.shape(),
                right: (weights.len(), 1),
            });
        }
        self.cross_entropy_impl(logits, target, Some(weights.to_vec()))
    }

    fn cross_entropy_impl(
        &mut self,
        logits: Var,
        target: &Matrix,
        weights: Option<Vec<f64>>,
    ) -> Result<Var> {
        let shape = self.shape(logits);
        if shape != target.shape() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: shape,
                right: target.shape(),
            });
        }
        check_distribution_rows(target)?;
        let z = self.value(logits);
        let mut logp = vec![0.0; shape.1];
        let mut total = 0.0;
        for r in 0..shape.0 {
            let w = weights.as_ref().map_or(1.0, |w| w[r]);
            if w == 0.0 {
                continue;
            }
            log_softmax_row(z.row(r), &mut logp);
            let h: f64 = target
                .row(r)
                .iter()
                .zip(&logp)
                .filter(|(t, _)| **t != 0.0)
                .map(|(t, lp)| -t * lp)
                .sum();
            total += w * h;
        }
        let n = shape.0.max(1) as f64;
        let out = Matrix::filled(1, 1, total / n);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                target: target.clone(),
                weights,
            },
            false,
        ))
    }

    /// Mean over rows of the squared L2 distance between `p` and `q`.
    pub fn mse(&mut self, p: Var, q: &Matrix) -> Result<Var> {
        let shape = self.shape(p);
        if shape != q.shape() {
            return Err(Error::Dimension {
                op: "mse",
                left: shape,
                right: q.shape(),
            });
        }
        let sq: f64 = self
            .value(p)
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let out = Matrix::filled(1, 1, sq / shape.0.max(1) as f64);
        Ok(self.push(out, Op::Mse { p, q: q.clone() }, false))
    }

    /// Clears accumulated gradients on every node.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    /// Reverse sweep from a scalar `loss`. Gradients add onto whatever each
    /// node already holds.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut scratch: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = scratch[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad && !node.stop_grad {
                self.propagate(i, &g, &mut scratch);
            }
            self.nodes[i].grad.add_assign(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, scratch: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let wants = |v: &Var| nodes[v.0].requires_grad;
        let mut send = |v: Var, m: Matrix| match &mut scratch[v.0] {
            Some(acc) => acc.add_assign(&m),
            slot @ None => *slot = Some(m),
        };
        match &nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].data, &nodes[b.0].data);
                if wants(a) {
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm_nt_acc(g, bv, &mut ga);
                    send(*a, ga);
                }
                if wants(b) {
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm_tn_acc(av, g, &mut gb);
                    send(*b, gb);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    send(*a, g.clone());
                }
                if wants(b) {
                    send(*b, g.clone());
                }
            }
            Op::AddRow(x, b) => {
                if wants(x) {
                    send(*x, g.clone());
                }
                if wants(b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*b, gb);
                }
            }
            Op::Relu(x) => {
                if wants(x) {
                    let xin = &nodes[x.0].data;
                    let mut gx = g.clone();
                    for (o, &v) in gx.as_mut_slice().iter_mut().zip(xin.as_slice()) {
                        if v <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    send(*x, gx);
                }
            }
            Op::Softmax(x) => {
                if wants(x) {
                    let s = &nodes[i].data;
                    let mut gx = Matrix::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let (sr, gr) = (s.row(r), g.row(r));
                        let dot: f64 = sr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (sv, gv)) in gx.row_mut(r).iter_mut().zip(sr.iter().zip(gr)) {
                            *o = sv * (gv - dot);
                        }
                    }
                    send(*x, gx);
                }
            }
            Op::Scale(x, k) => {
                if wants(x) {
                    send(*x, g.map(|v| v * k));
                }
            }
            Op::Sum(x) => {
                if wants(x) {
                    let (r, c) = nodes[x.0].data.shape();
                    send(*x, Matrix::filled(r, c, g.as_slice()[0]));
                }
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for x in xs {
                    let (rows, w) = nodes[x.0].data.shape();
                    if wants(x) {
                        let mut gx = Matrix::zeros(rows, w);
                        for r in 0..rows {
                            gx.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        send(*x, gx);
                    }
                    off += w;
                }
            }
            Op::Slice { src, start, end } => {
                if wants(src) {
                    let (rows, cols) = nodes[src.0].data.shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        gx.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                    }
                    send(*src, gx);
                }
            }
            Op::Identity(x) => {
                if wants(x) {
                    send(*x, g.clone());
                }
            }
            Op::CrossEntropy {
                logits,
                target,
                weights,
            } => {
                if wants(logits) {
                    let z = &nodes[logits.0].data;
                    let n = z.rows().max(1) as f64;
                    let go = g.as_slice()[0];
                    let mut gz = z.softmax_rows();
                    for r in 0..z.rows() {
                        let w = weights.as_ref().map_or(1.0, |w| w[r]);
                        let t = target.row(r);
                        let mass: f64 = t.iter().sum();
                        for (o, tv) in gz.row_mut(r).iter_mut().zip(t) {
                            *o = if w == 0.0 {
                                0.0
                            } else {
                                go * w * (*o * mass - tv) / n
                            };
                        }
                    }
                    send(*logits, gz);
                }
            }
            Op::Mse { p, q } => {
                if wants(p) {
                    let pv = &nodes[p.0].data;
                    let k = 2.0 * g.as_slice()[0] / pv.rows().max(1) as f64;
                    let mut gp = pv.clone();
                    for (o, qv) in gp.as_mut_slice().iter_mut().zip(q.as_slice()) {
                        *o = k * (*o - qv);
                    }
                    send(*p, gp);
                }
            }
        }
    }

    /// Signs of every relu pre-activation on the tape, in node order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.nodes[x.0].data.as_slice().iter().map(|v| *v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Smallest |pre-activation| over all relu nodes, or infinity when there are none.
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.nodes[x.0].data.as_slice().iter().map(|v| v.abs())),
                _ => None,
            })
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn check_distribution_rows(target: &Matrix) -> Result<()> {
    for r in 0..target.rows() {
        let row = target.row(r);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > TARGET_SUM_TOL || row.iter().any(|v| *v < -TARGET_SUM_TOL) {
            return Err(Error::Validation(format!(
                "target row {r} is not a probability vector (sum {s})"
            )));
        }
    }
    Ok(())
}

/// Softmax in place on a plain slice.
pub fn softmax_vec(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    softmax_in_place(&mut v);
    v
}
