use serde::{Deserialize, Serialize};

use super::kernels;
use super::{check_matmul, Tensor, KL_FLOOR};
use crate::error::{invalid, Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which side of the consistency divergence is the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(target ‖ softmax(logits))`.
    #[default]
    TargetToModel,
    /// `KL(softmax(logits) ‖ target)`.
    ModelToTarget,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Gelu(Var),
    Tanh(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CausalAttention {
        qkv: Var,
        segments: Vec<(usize, usize)>,
        heads: usize,
        probs: Vec<Vec<f64>>,
    },
    SegmentMean {
        x: Var,
        segments: Vec<(usize, usize)>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Option<Vec<f64>>,
        probs: Vec<f64>,
    },
    KlToTarget {
        logits: Var,
        target: Vec<f64>,
        rows: Vec<usize>,
        direction: KlDirection,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    tracked: bool,
    op: Op,
}

/// Execution-ordered record of tensor operations supporting one
/// reverse pass. Build a fresh graph per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by [`Graph::backward`], zeros if the node
    /// received none.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    fn push(&mut self, value: Tensor, tracked: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            tracked,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Dimension {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_matmul(ta, tb)?;
        let out = ta.matmul(tb)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, tracked, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let tracked = self.tracked(&[a]);
        self.push(out, tracked, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.dim_err("add", a, b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, tracked, Op::Add(a, b)))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(self.dim_err("add_bias", x, bias));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(tb.len()) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        let tracked = self.tracked(&[x, bias]);
        Ok(self.push(out, tracked, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(t.shape(), data).expect("same shape");
        let tracked = self.tracked(&[x]);
        self.push(out, tracked, Op::Scale(x, factor))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let tracked = self.tracked(&[x]);
        self.push(out, tracked, Op::Sum(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, kernels::gelu, Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    fn map(&mut self, x: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape(), data).expect("same shape");
        let tracked = self.tracked(&[x]);
        self.push(out, tracked, op)
    }

    /// Gathers rows of `table` by index.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    len: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], data)?;
        let tracked = self.tracked(&[table]);
        Ok(self.push(
            out,
            tracked,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = self.value(x).softmax_rows();
        let tracked = self.tracked(&[x]);
        self.push(out, tracked, Op::SoftmaxRows(x))
    }

    /// Per-row normalisation to zero mean and unit variance, then
    /// `gain * xhat + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(invalid("layer_norm eps must be positive"));
        }
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        if tg.len() != n {
            return Err(self.dim_err("layer_norm gain", x, gain));
        }
        if tb.len() != n {
            return Err(self.dim_err("layer_norm bias", x, bias));
        }
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = Vec::with_capacity(m);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let h = &mut xhat[i * n..(i + 1) * n];
            inv_std.push(kernels::layer_norm_row(tx.row(i), eps, h));
            for j in 0..n {
                data[i * n + j] = h[j] * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        let tracked = self.tracked(&[x, gain, bias]);
        Ok(self.push(
            out,
            tracked,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Multi-head causal self-attention over packed sequences.
    ///
    /// `qkv` is `N×3d` holding query, key and value projections side by
    /// side; `segments` are `(start_row, len)` ranges, one per sequence.
    /// Position `i` of a segment attends to positions `0..=i` of the same
    /// segment only. Output is `N×d` with heads concatenated.
    pub fn causal_attention(
        &mut self,
        qkv: Var,
        segments: &[(usize, usize)],
        heads: usize,
    ) -> Result<Var> {
        let t = self.value(qkv);
        let (n_rows, width) = (t.rows(), t.cols());
        if heads == 0 || width % (3 * heads) != 0 {
            return Err(invalid(format!(
                "qkv width {width} is not divisible into 3 x {heads} heads"
            )));
        }
        let d = width / 3;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; n_rows * d];
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for &(start, len) in segments {
            if start + len > n_rows {
                return Err(Error::Index {
                    what: "attention segment",
                    index: start + len,
                    len: n_rows,
                });
            }
            let block = &t.data()[start * width..(start + len) * width];
            for h in 0..heads {
                let mut p = vec![0.0; len * len];
                for i in 0..len {
                    let q = &block[i * width + h * dh..i * width + (h + 1) * dh];
                    let o = &mut out[(start + i) * d + h * dh..(start + i) * d + (h + 1) * dh];
                    kernels::attend_one(
                        q,
                        block,
                        block,
                        width,
                        d + h * dh,
                        2 * d + h * dh,
                        i + 1,
                        scale,
                        &mut p[i * len..(i + 1) * len],
                        o,
                    );
                }
                probs.push(p);
            }
        }
        let out = Tensor::new(&[n_rows, d], out)?;
        let tracked = self.tracked(&[qkv]);
        Ok(self.push(
            out,
            tracked,
            Op::CausalAttention {
                qkv,
                segments: segments.to_vec(),
                heads,
                probs,
            },
        ))
    }

    /// Mean of the rows in each `(start, len)` segment; one output row
    /// per segment.
    pub fn segment_mean(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var> {
        let t = self.value(x);
        let n = t.cols();
        let mut data = vec![0.0; segments.len() * n];
        for (s, &(start, len)) in segments.iter().enumerate() {
            if len == 0 || start + len > t.rows() {
                return Err(invalid(format!("bad segment ({start}, {len})")));
            }
            let out = &mut data[s * n..(s + 1) * n];
            for r in start..start + len {
                for (o, v) in out.iter_mut().zip(t.row(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let out = Tensor::new(&[segments.len(), n], data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(
            out,
            tracked,
            Op::SegmentMean {
                x,
                segments: segments.to_vec(),
            },
        ))
    }

    /// `(1/m) * sum_i w_i * -ln softmax(logits_i)[target_i]`, with
    /// `w_i = 1` when no weights are given.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let t = self.value(logits);
        let (m, c) = (t.rows(), t.cols());
        if targets.len() != m {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some(w) = weights {
            if w.len() != m {
                return Err(Error::Dimension {
                    op: "cross_entropy weights",
                    left: t.shape().to_vec(),
                    right: vec![w.len()],
                });
            }
        }
        let mut probs = t.data().to_vec();
        let mut total = 0.0;
        for (i, &target) in targets.iter().enumerate() {
            if target >= c {
                return Err(Error::Index {
                    what: "class",
                    index: target,
                    len: c,
                });
            }
            let row = t.row(i);
            let nll = kernels::log_sum_exp(row) - row[target];
            total += match weights {
                Some(w) => w[i] * nll,
                None => nll,
            };
            kernels::softmax_in_place(&mut probs[i * c..(i + 1) * c]);
        }
        let out = Tensor::scalar(total / m as f64);
        let tracked = self.tracked(&[logits]);
        Ok(self.push(
            out,
            tracked,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
                probs,
            },
        ))
    }

    /// Mean KL divergence between fixed target rows and `softmax(logits)`
    /// over the selected `rows`. The target is a constant: no gradient
    /// flows into it. Evaluates to 0 when `rows` is empty.
    pub fn kl_to_target(
        &mut self,
        logits: Var,
        target: &Tensor,
        rows: &[usize],
        direction: KlDirection,
    ) -> Result<Var> {
        let t = self.value(logits);
        if t.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "kl_to_target",
                left: t.shape().to_vec(),
                right: target.shape().to_vec(),
            });
        }
        let (m, c) = (t.rows(), t.cols());
        let mut probs = t.data().to_vec();
        for row in probs.chunks_mut(c) {
            kernels::softmax_in_place(row);
        }
        let mut total = 0.0;
        for &r in rows {
            if r >= m {
                return Err(Error::Index {
                    what: "kl row",
                    index: r,
                    len: m,
                });
            }
            let (p, q) = (target.row(r), &probs[r * c..(r + 1) * c]);
            total += match direction {
                KlDirection::TargetToModel => kernels::kl_row(p, q),
                KlDirection::ModelToTarget => kernels::kl_row(q, p),
            };
        }
        let value = if rows.is_empty() {
            0.0
        } else {
            total / rows.len() as f64
        };
        let tracked = self.tracked(&[logits]);
        Ok(self.push(
            Tensor::scalar(value),
            tracked,
            Op::KlToTarget {
                logits,
                target: target.data().to_vec(),
                rows: rows.to_vec(),
                direction,
                probs,
            },
        ))
    }

    /// Reverse pass from a one-element `loss`. Visits every recorded op
    /// once, in reverse execution order.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(upstream) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &upstream);
            self.nodes[i].grad = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.tracked {
            return;
        }
        match &mut node.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            None => node.grad = Some(delta.to_vec()),
        }
    }

    fn grad_buffer(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        let node = &mut self.nodes[v.0];
        if !node.tracked {
            return None;
        }
        let len = node.value.len();
        Some(node.grad.get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&mut self, i: usize, dy: &[f64]) {
        // Move the op out to sidestep borrowing self.nodes twice.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = self.value(*b).cols();
                if self.nodes[a.0].tracked {
                    let mut da = vec![0.0; m * k];
                    kernels::matmul_bt(dy, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(*a, &da);
                }
                if self.nodes[b.0].tracked {
                    let mut db = vec![0.0; k * n];
                    kernels::matmul_at(self.value(*a).data(), dy, &mut db, m, k, n);
                    self.accumulate(*b, &db);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; m * n];
                kernels::transpose(dy, &mut da, n, m);
                self.accumulate(*a, &da);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, dy);
                self.accumulate(*b, dy);
            }
            Op::AddBias(x, bias) => {
                self.accumulate(*x, dy);
                let n = self.value(*bias).len();
                let mut db = vec![0.0; n];
                for row in dy.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                self.accumulate(*bias, &db);
            }
            Op::Scale(x, f) => {
                let dx: Vec<f64> = dy.iter().map(|g| g * f).collect();
                self.accumulate(*x, &dx);
            }
            Op::Sum(x) => {
                let dx = vec![dy[0]; self.value(*x).len()];
                self.accumulate(*x, &dx);
            }
            Op::Gelu(x) => {
                let dx: Vec<f64> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, g)| g * kernels::gelu_grad(v))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Tanh(x) => {
                let dx: Vec<f64> = self.nodes[i]
                    .value
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&y, g)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Embedding { table, ids } => {
                let d = self.value(*table).cols();
                if let Some(g) = self.grad_buffer(*table) {
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut g[id * d..(id + 1) * d];
                        dst.iter_mut()
                            .zip(&dy[r * d..(r + 1) * d])
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = self.nodes[i].value.data().to_vec();
                let n = self.nodes[i].value.cols();
                let dx = softmax_backward(&y, dy, n);
                self.accumulate(*x, &dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = self.value(*x).cols();
                let g = self.value(*gain).data().to_vec();
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                let mut dx = vec![0.0; dy.len()];
                let mut dxhat = vec![0.0; n];
                for (r, inv) in inv_std.iter().enumerate() {
                    let dyr = &dy[r * n..(r + 1) * n];
                    let h = &xhat[r * n..(r + 1) * n];
                    for j in 0..n {
                        dg[j] += dyr[j] * h[j];
                        db[j] += dyr[j];
                        dxhat[j] = dyr[j] * g[j];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dh: f64 = dxhat.iter().zip(h).map(|(a, b)| a * b).sum();
                    let nf = n as f64;
                    for j in 0..n {
                        dx[r * n + j] = inv / nf * (nf * dxhat[j] - sum_d - h[j] * sum_dh);
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*gain, &dg);
                self.accumulate(*bias, &db);
            }
            Op::CausalAttention {
                qkv,
                segments,
                heads,
                probs,
            } => {
                let t = self.value(*qkv);
                let width = t.cols();
                let d = width / 3;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let x = t.data();
                let mut dqkv = vec![0.0; x.len()];
                let mut pi = 0;
                for &(start, len) in segments {
                    for h in 0..*heads {
                        let p = &probs[pi];
                        pi += 1;
                        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                        let row = |r: usize, off: usize| (start + r) * width + off;
                        let mut dp = vec![0.0; len];
                        for i in 0..len {
                            let dout = &dy[(start + i) * d + h * dh..(start + i) * d + (h + 1) * dh];
                            let pr = &p[i * len..(i + 1) * len];
                            for j in 0..=i {
                                let v = &x[row(j, vo)..row(j, vo) + dh];
                                dp[j] = kernels::dot(dout, v);
                                let dv = &mut dqkv[row(j, vo)..row(j, vo) + dh];
                                dv.iter_mut().zip(dout).for_each(|(a, b)| *a += pr[j] * b);
                            }
                            let inner: f64 = (0..=i).map(|j| pr[j] * dp[j]).sum();
                            for j in 0..=i {
                                let ds = pr[j] * (dp[j] - inner) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                for c in 0..dh {
                                    dqkv[row(i, qo) + c] += ds * x[row(j, ko) + c];
                                    dqkv[row(j, ko) + c] += ds * x[row(i, qo) + c];
                                }
                            }
                        }
                    }
                }
                self.accumulate(*qkv, &dqkv);
            }
            Op::SegmentMean { x, segments } => {
                let n = self.value(*x).cols();
                let mut dx = vec![0.0; self.value(*x).len()];
                for (s, &(start, len)) in segments.iter().enumerate() {
                    let inv = 1.0 / len as f64;
                    let g = &dy[s * n..(s + 1) * n];
                    for r in start..start + len {
                        dx[r * n..(r + 1) * n]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(a, b)| *a += b * inv);
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let c = self.value(*logits).cols();
                let m = targets.len() as f64;
                let mut dx = probs.clone();
                for (r, &target) in targets.iter().enumerate() {
                    dx[r * c + target] -= 1.0;
                    let w = weights.as_ref().map_or(1.0, |w| w[r]);
                    let f = w * dy[0] / m;
                    dx[r * c..(r + 1) * c].iter_mut().for_each(|v| *v *= f);
                }
                self.accumulate(*logits, &dx);
            }
            Op::KlToTarget {
                logits,
                target,
                rows,
                direction,
                probs,
            } => {
                if !rows.is_empty() {
                    let c = self.value(*logits).cols();
                    let f = dy[0] / rows.len() as f64;
                    let mut dx = vec![0.0; probs.len()];
                    let mut g = vec![0.0; c];
                    for &r in rows {
                        let p = &target[r * c..(r + 1) * c];
                        let q = &probs[r * c..(r + 1) * c];
                        for j in 0..c {
                            g[j] = match direction {
                                KlDirection::TargetToModel if q[j] > KL_FLOOR => -p[j] / q[j],
                                KlDirection::TargetToModel => 0.0,
                                KlDirection::ModelToTarget if q[j] > 0.0 => {
                                    (q[j] / p[j].max(KL_FLOOR)).ln() + 1.0
                                }
                                KlDirection::ModelToTarget => 0.0,
                            };
                        }
                        let inner: f64 = g.iter().zip(q).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dx[r * c + j] += f * q[j] * (g[j] - inner);
                        }
                    }
                    self.accumulate(*logits, &dx);
                }
            }
        }
        self.nodes[i].op = op;
    }
}

fn softmax_backward(y: &[f64], dy: &[f64], n: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for ((yr, gr), out) in y.chunks(n).zip(dy.chunks(n)).zip(dx.chunks_mut(n)) {
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &yv), &g) in out.iter_mut().zip(yr).zip(gr) {
            *o = yv * (g - inner);
        }
    }
    dx
}
