//! Reverse-mode gradient recording.
//!
//! A [`GradContext`] records every operation of one loss evaluation as a flat
//! tape of nodes. [`GradContext::backward`] walks the tape once in reverse and
//! accumulates parameter gradients into the [`ParameterStore`] gradient slots.
//!
//! Parameter values must not change between recording and `backward`; a
//! context is confined to a single worker.

use crate::error::{Error, Result};
use crate::numerics::store::{ParamId, ParameterStore};

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug)]
enum Op {
    /// Gradient-free input data.
    Input,
    /// A whole 1-D parameter tensor.
    Param { id: ParamId },
    /// One row of a 2-D parameter tensor.
    ParamRow { id: ParamId, row: usize },
    /// One element of a parameter tensor.
    ParamElem { id: ParamId, index: usize },
    /// `W x + b` with `W`, `b` referenced in the store.
    Linear { w: ParamId, b: ParamId, x: VarId },
    /// `W x` with `W` referenced in the store.
    MatVec { w: ParamId, x: VarId },
    Add { a: VarId, b: VarId },
    Sub { a: VarId, b: VarId },
    /// Elementwise product.
    Mul { a: VarId, b: VarId },
    Neg { x: VarId },
    Dot { a: VarId, b: VarId },
    Scale { x: VarId, c: f64 },
    Tanh { x: VarId },
    Sigmoid { x: VarId },
    Softmax { x: VarId },
    /// Scalars stacked into a vector.
    Stack { parts: Vec<VarId> },
    /// `sum_k weights[k] * items[k]` over equal-length item vectors.
    WeightedSum { weights: VarId, items: Vec<VarId> },
    Sum { terms: Vec<VarId> },
    Mean { terms: Vec<VarId> },
    LogSigmoid { x: VarId },
    /// Numerically stable `-y log s(x) - (1-y) log(1-s(x))`.
    BceWithLogits { logit: VarId, label: f64 },
    /// `max(0, neg - pos + margin)` with subgradient 0 at the kink.
    Hinge { pos: VarId, neg: VarId },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Recorded operation sequence for one loss evaluation.
#[derive(Default)]
pub struct GradContext {
    nodes: Vec<Node>,
}

impl GradContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: VarId) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: VarId) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    fn want_len(&self, v: VarId, len: usize, ctx: &str) -> Result<()> {
        let got = self.nodes[v.0].value.len();
        if got != len {
            return Err(Error::Shape(format!(
                "{ctx}: expected length {len}, got {got}"
            )));
        }
        Ok(())
    }

    pub fn input(&mut self, data: Vec<f64>) -> VarId {
        self.push(data, Op::Input)
    }

    pub fn scalar_input(&mut self, v: f64) -> VarId {
        self.push(vec![v], Op::Input)
    }

    /// Record a whole 1-D parameter.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> VarId {
        let value = store.value(id).data().to_vec();
        self.push(value, Op::Param { id })
    }

    /// Record one row of a 2-D parameter (e.g. an embedding lookup).
    pub fn param_row(&mut self, store: &ParameterStore, id: ParamId, row: usize) -> VarId {
        let value = store.value(id).row(row).to_vec();
        self.push(value, Op::ParamRow { id, row })
    }

    /// Record a single parameter element as a scalar.
    pub fn param_elem(&mut self, store: &ParameterStore, id: ParamId, index: usize) -> VarId {
        let value = vec![store.value(id).data()[index]];
        self.push(value, Op::ParamElem { id, index })
    }

    /// `W x + b`.
    pub fn linear(
        &mut self,
        store: &ParameterStore,
        w: ParamId,
        b: ParamId,
        x: VarId,
    ) -> Result<VarId> {
        let wt = store.value(w);
        let bt = store.value(b);
        let (rows, cols) = (wt.rows(), wt.cols());
        self.want_len(x, cols, "linear input")?;
        if bt.len() != rows {
            return Err(Error::Shape(format!(
                "linear bias length {} does not match {} rows",
                bt.len(),
                rows
            )));
        }
        let xv = &self.nodes[x.0].value;
        let mut out = bt.data().to_vec();
        let wd = wt.data();
        for r in 0..rows {
            let mut acc = 0.0;
            let row = &wd[r * cols..(r + 1) * cols];
            for (wj, xj) in row.iter().zip(xv.iter()) {
                acc += wj * xj;
            }
            out[r] += acc;
        }
        Ok(self.push(out, Op::Linear { w, b, x }))
    }

    /// `W x` without bias (recurrent connections).
    pub fn matvec(&mut self, store: &ParameterStore, w: ParamId, x: VarId) -> Result<VarId> {
        let wt = store.value(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        self.want_len(x, cols, "matvec input")?;
        let xv = &self.nodes[x.0].value;
        let wd = wt.data();
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &wd[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (wj, xj) in row.iter().zip(xv.iter()) {
                acc += wj * xj;
            }
            out[r] = acc;
        }
        Ok(self.push(out, Op::MatVec { w, x }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.want_len(b, self.nodes[a.0].value.len(), "add")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.want_len(b, self.nodes[a.0].value.len(), "sub")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(value, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.want_len(b, self.nodes[a.0].value.len(), "mul")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn neg(&mut self, x: VarId) -> VarId {
        let value = self.nodes[x.0].value.iter().map(|v| -v).collect();
        self.push(value, Op::Neg { x })
    }

    pub fn dot(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.want_len(b, self.nodes[a.0].value.len(), "dot")?;
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(vec![v], Op::Dot { a, b }))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        let value = self.nodes[x.0].value.iter().map(|v| v * c).collect();
        self.push(value, Op::Scale { x, c })
    }

    /// `(q . h) / sqrt(dim)`.
    pub fn scaled_dot(&mut self, q: VarId, h: VarId, dim: usize) -> Result<VarId> {
        if dim == 0 {
            return Err(Error::InvalidInput("scaled_dot: dim must be > 0".into()));
        }
        let d = self.dot(q, h)?;
        Ok(self.scale(d, 1.0 / (dim as f64).sqrt()))
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let value = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(value, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let value = self.nodes[x.0].value.iter().map(|v| sigmoid(*v)).collect();
        self.push(value, Op::Sigmoid { x })
    }

    /// Softmax with max subtraction; errors on empty input.
    pub fn softmax(&mut self, x: VarId) -> Result<VarId> {
        let xv = &self.nodes[x.0].value;
        if xv.is_empty() {
            return Err(Error::InvalidInput("softmax of empty vector".into()));
        }
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let value = exps.into_iter().map(|e| e / total).collect();
        Ok(self.push(value, Op::Softmax { x }))
    }

    /// Stack scalar nodes into one vector node.
    pub fn stack(&mut self, parts: &[VarId]) -> Result<VarId> {
        let mut value = Vec::with_capacity(parts.len());
        for &p in parts {
            self.want_len(p, 1, "stack part")?;
            value.push(self.nodes[p.0].value[0]);
        }
        Ok(self.push(
            value,
            Op::Stack {
                parts: parts.to_vec(),
            },
        ))
    }

    /// `sum_k weights[k] * items[k]`; `weights` has one entry per item.
    pub fn weighted_sum(&mut self, weights: VarId, items: &[VarId]) -> Result<VarId> {
        self.want_len(weights, items.len(), "weighted_sum weights")?;
        if items.is_empty() {
            return Err(Error::InvalidInput("weighted_sum of no items".into()));
        }
        let dim = self.nodes[items[0].0].value.len();
        for &it in items {
            self.want_len(it, dim, "weighted_sum item")?;
        }
        let mut value = vec![0.0; dim];
        for (k, &it) in items.iter().enumerate() {
            let wk = self.nodes[weights.0].value[k];
            for (o, v) in value.iter_mut().zip(&self.nodes[it.0].value) {
                *o += wk * v;
            }
        }
        Ok(self.push(
            value,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, terms: &[VarId]) -> Result<VarId> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("sum of no terms".into()));
        }
        let mut acc = 0.0;
        for &t in terms {
            self.want_len(t, 1, "sum term")?;
            acc += self.nodes[t.0].value[0];
        }
        Ok(self.push(
            vec![acc],
            Op::Sum {
                terms: terms.to_vec(),
            },
        ))
    }

    pub fn mean(&mut self, terms: &[VarId]) -> Result<VarId> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("mean of no terms".into()));
        }
        let mut acc = 0.0;
        for &t in terms {
            self.want_len(t, 1, "mean term")?;
            acc += self.nodes[t.0].value[0];
        }
        Ok(self.push(
            vec![acc / terms.len() as f64],
            Op::Mean {
                terms: terms.to_vec(),
            },
        ))
    }

    pub fn log_sigmoid(&mut self, x: VarId) -> Result<VarId> {
        self.want_len(x, 1, "log_sigmoid")?;
        let v = -softplus(-self.nodes[x.0].value[0]);
        Ok(self.push(vec![v], Op::LogSigmoid { x }))
    }

    pub fn bce_with_logits(&mut self, logit: VarId, label: f64) -> Result<VarId> {
        self.want_len(logit, 1, "bce_with_logits")?;
        if label != 0.0 && label != 1.0 {
            return Err(Error::InvalidInput(format!(
                "label {label} outside {{0, 1}}"
            )));
        }
        let x = self.nodes[logit.0].value[0];
        let v = label * softplus(-x) + (1.0 - label) * softplus(x);
        Ok(self.push(vec![v], Op::BceWithLogits { logit, label }))
    }

    pub fn hinge(&mut self, pos: VarId, neg: VarId, margin: f64) -> Result<VarId> {
        self.want_len(pos, 1, "hinge pos")?;
        self.want_len(neg, 1, "hinge neg")?;
        let v = (self.nodes[neg.0].value[0] - self.nodes[pos.0].value[0] + margin).max(0.0);
        Ok(self.push(vec![v], Op::Hinge { pos, neg }))
    }

    /// First recorded lookup node for each distinct row of `param` on this tape.
    pub fn touched_rows(&self, param: ParamId) -> Vec<(usize, VarId)> {
        let mut seen = std::collections::BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::ParamRow { id, row } = node.op {
                if id == param {
                    seen.entry(row).or_insert(VarId(i));
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Backpropagate from `root` (a scalar node), accumulating parameter
    /// gradients into `store`. Visits every recorded op once, in reverse.
    pub fn backward(&self, root: VarId, store: &mut ParameterStore) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Shape("backward root must be a scalar".into()));
        }
        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[root.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if adj[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            let dy = adj[i].clone();
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param { id } => {
                    for (g, d) in store.grad_mut(*id).iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::ParamRow { id, row } => {
                    let cols = store.value(*id).cols();
                    let grad = &mut store.grad_mut(*id)[row * cols..(row + 1) * cols];
                    for (g, d) in grad.iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::ParamElem { id, index } => {
                    store.grad_mut(*id)[*index] += dy[0];
                }
                Op::Linear { w, b, x } => {
                    let xv = self.nodes[x.0].value.clone();
                    let (rows, cols) = {
                        let wt = store.value(*w);
                        (wt.rows(), wt.cols())
                    };
                    // dx = W^T dy
                    {
                        let wd = store.value(*w).data();
                        let dx = &mut adj[x.0];
                        for r in 0..rows {
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (dxj, wj) in dx.iter_mut().zip(row) {
                                *dxj += wj * dy[r];
                            }
                        }
                    }
                    // dW = dy x^T, db = dy
                    {
                        let gw = store.grad_mut(*w);
                        for r in 0..rows {
                            let grow = &mut gw[r * cols..(r + 1) * cols];
                            for (gj, xj) in grow.iter_mut().zip(&xv) {
                                *gj += dy[r] * xj;
                            }
                        }
                    }
                    for (g, d) in store.grad_mut(*b).iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::MatVec { w, x } => {
                    let xv = self.nodes[x.0].value.clone();
                    let (rows, cols) = {
                        let wt = store.value(*w);
                        (wt.rows(), wt.cols())
                    };
                    {
                        let wd = store.value(*w).data();
                        let dx = &mut adj[x.0];
                        for r in 0..rows {
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (dxj, wj) in dx.iter_mut().zip(row) {
                                *dxj += wj * dy[r];
                            }
                        }
                    }
                    let gw = store.grad_mut(*w);
                    for r in 0..rows {
                        let grow = &mut gw[r * cols..(r + 1) * cols];
                        for (gj, xj) in grow.iter_mut().zip(&xv) {
                            *gj += dy[r] * xj;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (k, d) in dy.iter().enumerate() {
                        adj[a.0][k] += d;
                    }
                    for (k, d) in dy.iter().enumerate() {
                        adj[b.0][k] += d;
                    }
                }
                Op::Sub { a, b } => {
                    for (k, d) in dy.iter().enumerate() {
                        adj[a.0][k] += d;
                    }
                    for (k, d) in dy.iter().enumerate() {
                        adj[b.0][k] -= d;
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (k, d) in dy.iter().enumerate() {
                        adj[a.0][k] += d * bv[k];
                    }
                    for (k, d) in dy.iter().enumerate() {
                        adj[b.0][k] += d * av[k];
                    }
                }
                Op::Neg { x } => {
                    for (k, d) in dy.iter().enumerate() {
                        adj[x.0][k] -= d;
                    }
                }
                Op::Dot { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (k, v) in bv.iter().enumerate() {
                        adj[a.0][k] += dy[0] * v;
                    }
                    for (k, v) in av.iter().enumerate() {
                        adj[b.0][k] += dy[0] * v;
                    }
                }
                Op::Scale { x, c } => {
                    for (k, d) in dy.iter().enumerate() {
                        adj[x.0][k] += c * d;
                    }
                }
                Op::Tanh { x } => {
                    let yv = self.nodes[i].value.clone();
                    for (k, d) in dy.iter().enumerate() {
                        adj[x.0][k] += d * (1.0 - yv[k] * yv[k]);
                    }
                }
                Op::Sigmoid { x } => {
                    let yv = self.nodes[i].value.clone();
                    for (k, d) in dy.iter().enumerate() {
                        adj[x.0][k] += d * yv[k] * (1.0 - yv[k]);
                    }
                }
                Op::Softmax { x } => {
                    let yv = self.nodes[i].value.clone();
                    let inner: f64 = dy.iter().zip(&yv).map(|(d, y)| d * y).sum();
                    for (k, y) in yv.iter().enumerate() {
                        adj[x.0][k] += y * (dy[k] - inner);
                    }
                }
                Op::Stack { parts } => {
                    for (k, p) in parts.iter().enumerate() {
                        adj[p.0][0] += dy[k];
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = self.nodes[weights.0].value.clone();
                    for (k, it) in items.iter().enumerate() {
                        let iv = self.nodes[it.0].value.clone();
                        let dw: f64 = dy.iter().zip(&iv).map(|(d, v)| d * v).sum();
                        adj[weights.0][k] += dw;
                        for (j, d) in dy.iter().enumerate() {
                            adj[it.0][j] += wv[k] * d;
                        }
                    }
                }
                Op::Sum { terms } => {
                    for t in terms {
                        adj[t.0][0] += dy[0];
                    }
                }
                Op::Mean { terms } => {
                    let scale = 1.0 / terms.len() as f64;
                    for t in terms {
                        adj[t.0][0] += dy[0] * scale;
                    }
                }
                Op::LogSigmoid { x } => {
                    let xv = self.nodes[x.0].value[0];
                    adj[x.0][0] += dy[0] * (1.0 - sigmoid(xv));
                }
                Op::BceWithLogits { logit, label } => {
                    let xv = self.nodes[logit.0].value[0];
                    adj[logit.0][0] += dy[0] * (sigmoid(xv) - label);
                }
                Op::Hinge { pos, neg } => {
                    if self.nodes[i].value[0] > 0.0 {
                        adj[pos.0][0] -= dy[0];
                        adj[neg.0][0] += dy[0];
                    }
                }
            }
        }
        Ok(())
    }
}
