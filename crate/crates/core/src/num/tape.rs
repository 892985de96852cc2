//! Reverse-mode differentiation over a fixed primitive set.
//!
//! A `Tape` records primitive applications in construction order; `backward`
//! walks them in exact reverse order, accumulating gradients additively at
//! fan-out. Every primitive checks input shapes (invalid-argument) and output
//! finiteness (divergence).

use super::tensor::{matmul, Real, Tensor};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Train/eval switch: flips dropout and the batchnorm statistics source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Logits are clamped to this magnitude inside bce-with-logits.
pub const BCE_LOGIT_CLAMP: f64 = 30.0;

enum Op<F: Real> {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Scale(usize, F),
    Mul(usize, usize),
    Concat1(usize, usize),
    GatherRows(usize, Vec<usize>),
    SegmentSum(usize, Vec<usize>, usize),
    SegmentMean(usize, Vec<usize>, usize),
    ScaleRows(usize, Vec<F>),
    RowSum(usize),
    Relu(usize),
    Sigmoid(usize),
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Tensor<F>,
        var: Tensor<F>,
        eps: F,
        train: bool,
    },
    BceLogits {
        logits: usize,
        targets: Tensor<F>,
    },
    CeRows {
        logits: usize,
        targets: Vec<usize>,
    },
    L2NormRows(usize, F),
    SumAll(usize),
    MeanAll(usize),
}

struct Node<F: Real> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Recorded primitive applications enabling reverse-mode gradients.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Divergence(
                "primitive produced a non-finite value".into(),
            ));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Insert a constant (or parameter) leaf.
    pub fn leaf(&mut self, value: Tensor<F>) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(&self.nodes[a.0].value, &self.nodes[b.0].value, false, false)?;
        self.push(out, Op::Matmul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::invalid(format!(
                "add shape mismatch: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(out, Op::Add(a.0, b.0))
    }

    /// `a + b` broadcasting the `[1, n]` bias row over every row of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(Error::invalid(format!(
                "add_bias expects bias [1,{}], got {:?}",
                ta.cols(),
                tb.shape()
            )));
        }
        let mut out = ta.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (o, &bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        self.push(out, Op::AddBias(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, k: F) -> Result<Var> {
        let out = self.nodes[a.0].value.map(|x| x * k);
        self.push(out, Op::Scale(a.0, k))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::invalid(format!(
                "mul shape mismatch: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = ta.clone();
        for (o, &bv) in out.data_mut().iter_mut().zip(tb.data()) {
            *o *= bv;
        }
        self.push(out, Op::Mul(a.0, b.0))
    }

    pub fn concat1(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows() != tb.rows() {
            return Err(Error::invalid(format!(
                "concat1 row mismatch: {} vs {}",
                ta.rows(),
                tb.rows()
            )));
        }
        let mut out = Tensor::zeros(ta.rows(), ta.cols() + tb.cols());
        for i in 0..ta.rows() {
            let row = out.row_mut(i);
            row[..ta.cols()].copy_from_slice(ta.row(i));
            row[ta.cols()..].copy_from_slice(tb.row(i));
        }
        self.push(out, Op::Concat1(a.0, b.0))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(Error::invalid(format!(
                "gather index {bad} out of range ({} rows)",
                ta.rows()
            )));
        }
        let mut out = Tensor::zeros(idx.len(), ta.cols());
        for (i, &src) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(ta.row(src));
        }
        self.push(out, Op::GatherRows(a.0, idx))
    }

    pub fn segment_sum(&mut self, a: Var, ids: Vec<usize>, segments: usize) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        if ids.len() != ta.rows() {
            return Err(Error::invalid("segment ids must cover every row"));
        }
        if let Some(&bad) = ids.iter().find(|&&s| s >= segments) {
            return Err(Error::invalid(format!("segment id {bad} >= {segments}")));
        }
        let mut out = Tensor::zeros(segments, ta.cols());
        for (i, &s) in ids.iter().enumerate() {
            let src = ta.row(i);
            let dst = out.row_mut(s);
            for (d, &x) in dst.iter_mut().zip(src) {
                *d += x;
            }
        }
        self.push(out, Op::SegmentSum(a.0, ids, segments))
    }

    /// Per-segment mean; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: Var, ids: Vec<usize>, segments: usize) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        if ids.len() != ta.rows() {
            return Err(Error::invalid("segment ids must cover every row"));
        }
        if let Some(&bad) = ids.iter().find(|&&s| s >= segments) {
            return Err(Error::invalid(format!("segment id {bad} >= {segments}")));
        }
        let mut counts = vec![0usize; segments];
        for &s in &ids {
            counts[s] += 1;
        }
        let mut out = Tensor::zeros(segments, ta.cols());
        for (i, &s) in ids.iter().enumerate() {
            let src = ta.row(i);
            let dst = out.row_mut(s);
            for (d, &x) in dst.iter_mut().zip(src) {
                *d += x;
            }
        }
        for s in 0..segments {
            if counts[s] > 0 {
                let inv = F::one() / F::from_f64(counts[s] as f64);
                for x in out.row_mut(s) {
                    *x *= inv;
                }
            }
        }
        self.push(out, Op::SegmentMean(a.0, ids, segments))
    }

    /// Multiply row `i` by the constant `weights[i]` (no gradient through weights).
    pub fn scale_rows(&mut self, a: Var, weights: Vec<F>) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        if weights.len() != ta.rows() {
            return Err(Error::invalid("scale_rows weight per row required"));
        }
        let mut out = ta.clone();
        for (i, &w) in weights.iter().enumerate() {
            for x in out.row_mut(i) {
                *x *= w;
            }
        }
        self.push(out, Op::ScaleRows(a.0, weights))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let mut out = Tensor::zeros(ta.rows(), 1);
        for i in 0..ta.rows() {
            out.set(i, 0, ta.row(i).iter().copied().sum());
        }
        self.push(out, Op::RowSum(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.nodes[a.0].value.map(|x| if x > F::zero() { x } else { F::zero() });
        self.push(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.nodes[a.0].value.map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(a.0))
    }

    /// Inverted dropout: identity in eval mode or at rate 0.
    pub fn dropout(
        &mut self,
        a: Var,
        rate: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0,1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let scale = F::from_f64(1.0 / keep);
        let shape = self.nodes[a.0].value.shape();
        let mask_data: Vec<F> = (0..shape.0 * shape.1)
            .map(|_| if rng.random::<f64>() < keep { scale } else { F::zero() })
            .collect();
        let mask = self.leaf(Tensor::from_vec(shape.0, shape.1, mask_data)?)?;
        self.mul(a, mask)
    }

    /// Batch normalization over rows (statistics per column).
    ///
    /// Train mode computes biased batch statistics and returns them so the
    /// caller can fold them into running statistics; eval mode applies the
    /// deterministic affine map given by `running`.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&Tensor<F>, &Tensor<F>),
        mode: Mode,
        eps: F,
    ) -> Result<(Var, Option<(Tensor<F>, Tensor<F>)>)> {
        let tx = &self.nodes[x.0].value;
        let (m, n) = tx.shape();
        let check = |t: &Tensor<F>, what: &str| -> Result<()> {
            if t.shape() != (1, n) {
                return Err(Error::invalid(format!(
                    "batchnorm {what} must be [1,{n}], got {:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        check(&self.nodes[gamma.0].value, "gamma")?;
        check(&self.nodes[beta.0].value, "beta")?;
        check(running.0, "running mean")?;
        check(running.1, "running var")?;

        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                let mut mean = Tensor::zeros(1, n);
                for i in 0..m {
                    for (j, &v) in tx.row(i).iter().enumerate() {
                        mean.data_mut()[j] += v;
                    }
                }
                let inv_m = F::one() / F::from_f64(m as f64);
                for v in mean.data_mut() {
                    *v *= inv_m;
                }
                let mut var = Tensor::zeros(1, n);
                for i in 0..m {
                    for (j, &v) in tx.row(i).iter().enumerate() {
                        let d = v - mean.data()[j];
                        var.data_mut()[j] += d * d;
                    }
                }
                for v in var.data_mut() {
                    *v *= inv_m;
                }
                let stats = (mean.clone(), var.clone());
                (mean, var, Some(stats))
            }
            Mode::Eval => (running.0.clone(), running.1.clone(), None),
        };

        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let xhat = (tx.get(i, j) - mean.data()[j]) / (var.data()[j] + eps).sqrt();
                out.set(i, j, g.data()[j] * xhat + b.data()[j]);
            }
        }
        let v = self.push(
            out,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean,
                var,
                eps,
                train: mode == Mode::Train,
            },
        )?;
        Ok((v, batch_stats))
    }

    /// Elementwise binary cross entropy with logits against constant 0/1
    /// targets, in the numerically stable log-sum-exp form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Tensor<F>) -> Result<Var> {
        let tl = &self.nodes[logits.0].value;
        if tl.shape() != targets.shape() {
            return Err(Error::invalid(format!(
                "bce shape mismatch: logits {:?} vs targets {:?}",
                tl.shape(),
                targets.shape()
            )));
        }
        let clamp = F::from_f64(BCE_LOGIT_CLAMP);
        let mut out = Tensor::zeros(tl.rows(), tl.cols());
        for (o, (&x, &y)) in out.data_mut().iter_mut().zip(tl.data().iter().zip(targets.data())) {
            let xc = x.max(-clamp).min(clamp);
            // max(x,0) - x*y + ln(1 + exp(-|x|))
            let pos = xc.max(F::zero());
            *o = pos - xc * y + (F::one() + (-xc.abs()).exp()).ln();
        }
        self.push(out, Op::BceLogits { logits: logits.0, targets })
    }

    /// Per-row softmax cross entropy against constant class indices; returns `[m, 1]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let tl = &self.nodes[logits.0].value;
        if targets.len() != tl.rows() {
            return Err(Error::invalid("one target class per row required"));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= tl.cols()) {
            return Err(Error::invalid(format!(
                "target class {bad} out of range ({} classes)",
                tl.cols()
            )));
        }
        let mut out = Tensor::zeros(tl.rows(), 1);
        for i in 0..tl.rows() {
            let row = tl.row(i);
            let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<F>().ln();
            out.set(i, 0, lse - row[targets[i]]);
        }
        self.push(out, Op::CeRows { logits: logits.0, targets })
    }

    /// Normalize each row to unit L2 norm (zero rows stay zero).
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let eps = F::from_f64(1e-12);
        let ta = &self.nodes[a.0].value;
        let mut out = ta.clone();
        for i in 0..out.rows() {
            let norm = row_norm(ta.row(i), eps);
            for x in out.row_mut(i) {
                *x = *x / norm;
            }
        }
        self.push(out, Op::L2NormRows(a.0, eps))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s: F = self.nodes[a.0].value.data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        if t.numel() == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s: F = t.data().iter().copied().sum();
        let v = s / F::from_f64(t.numel() as f64);
        self.push(Tensor::scalar(v), Op::MeanAll(a.0))
    }

    /// Reverse pass from a scalar loss. Gradients accumulate additively at
    /// fan-out; primitives are visited in exact reverse construction order.
    pub fn backward(&self, loss: Var) -> Result<Grads<F>> {
        let lt = &self.nodes[loss.0].value;
        if lt.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {:?}",
                lt.shape()
            )));
        }
        if !lt.is_finite() {
            return Err(Error::Divergence("loss is non-finite".into()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(F::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Grads { by_node: grads })
    }

    fn accumulate(&self, id: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) -> Result<()> {
        let add_to = |grads: &mut [Option<Tensor<F>>], target: usize, delta: Tensor<F>| {
            match &mut grads[target] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                add_to(grads, *a, matmul(g, vb, false, true)?);
                add_to(grads, *b, matmul(va, g, true, false)?);
            }
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::AddBias(a, b) => {
                add_to(grads, *a, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (j, &v) in g.row(i).iter().enumerate() {
                        gb.data_mut()[j] += v;
                    }
                }
                add_to(grads, *b, gb);
            }
            Op::Scale(a, k) => add_to(grads, *a, g.map(|x| x * *k)),
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let mut ga = g.clone();
                for (x, &m) in ga.data_mut().iter_mut().zip(vb.data()) {
                    *x *= m;
                }
                let mut gb = g.clone();
                for (x, &m) in gb.data_mut().iter_mut().zip(va.data()) {
                    *x *= m;
                }
                add_to(grads, *a, ga);
                add_to(grads, *b, gb);
            }
            Op::Concat1(a, b) => {
                let ca = self.nodes[*a].value.cols();
                let cb = self.nodes[*b].value.cols();
                let mut ga = Tensor::zeros(g.rows(), ca);
                let mut gb = Tensor::zeros(g.rows(), cb);
                for i in 0..g.rows() {
                    ga.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                    gb.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                }
                add_to(grads, *a, ga);
                add_to(grads, *b, gb);
            }
            Op::GatherRows(a, idx) => {
                let mut ga = Tensor::zeros(self.nodes[*a].value.rows(), g.cols());
                for (i, &src) in idx.iter().enumerate() {
                    let dst = ga.row_mut(src);
                    for (d, &v) in dst.iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::SegmentSum(a, ids, _) => {
                let mut ga = Tensor::zeros(ids.len(), g.cols());
                for (i, &s) in ids.iter().enumerate() {
                    ga.row_mut(i).copy_from_slice(g.row(s));
                }
                add_to(grads, *a, ga);
            }
            Op::SegmentMean(a, ids, segments) => {
                let mut counts = vec![0usize; *segments];
                for &s in ids {
                    counts[s] += 1;
                }
                let mut ga = Tensor::zeros(ids.len(), g.cols());
                for (i, &s) in ids.iter().enumerate() {
                    let inv = F::one() / F::from_f64(counts[s] as f64);
                    for (d, &v) in ga.row_mut(i).iter_mut().zip(g.row(s)) {
                        *d = v * inv;
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::ScaleRows(a, weights) => {
                let mut ga = g.clone();
                for (i, &w) in weights.iter().enumerate() {
                    for x in ga.row_mut(i) {
                        *x *= w;
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::RowSum(a) => {
                let cols = self.nodes[*a].value.cols();
                let mut ga = Tensor::zeros(g.rows(), cols);
                for i in 0..g.rows() {
                    let gv = g.get(i, 0);
                    for x in ga.row_mut(i) {
                        *x = gv;
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::Relu(a) => {
                let va = &self.nodes[*a].value;
                let mut ga = g.clone();
                for (x, &v) in ga.data_mut().iter_mut().zip(va.data()) {
                    if v <= F::zero() {
                        *x = F::zero();
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[id].value;
                let mut ga = g.clone();
                for (x, &s) in ga.data_mut().iter_mut().zip(out.data()) {
                    *x *= s * (F::one() - s);
                }
                add_to(grads, *a, ga);
            }
            Op::BatchNorm { x, gamma, beta, mean, var, eps, train } => {
                let vx = &self.nodes[*x].value;
                let vg = &self.nodes[*gamma].value;
                let (m, n) = vx.shape();
                let mf = F::from_f64(m as f64);
                // xhat from the stored statistics
                let mut dgamma = Tensor::zeros(1, n);
                let mut dbeta = Tensor::zeros(1, n);
                let mut sum_dxhat = vec![F::zero(); n];
                let mut sum_dxhat_xhat = vec![F::zero(); n];
                let inv_std: Vec<F> =
                    (0..n).map(|j| F::one() / (var.data()[j] + *eps).sqrt()).collect();
                let xhat_at = |i: usize, j: usize| (vx.get(i, j) - mean.data()[j]) * inv_std[j];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g.get(i, j);
                        let xh = xhat_at(i, j);
                        dgamma.data_mut()[j] += gij * xh;
                        dbeta.data_mut()[j] += gij;
                        let dxh = gij * vg.data()[j];
                        sum_dxhat[j] += dxh;
                        sum_dxhat_xhat[j] += dxh * xh;
                    }
                }
                let mut gx = Tensor::zeros(m, n);
                if *train {
                    for i in 0..m {
                        for j in 0..n {
                            let dxh = g.get(i, j) * vg.data()[j];
                            let xh = xhat_at(i, j);
                            let v = inv_std[j]
                                * (dxh - sum_dxhat[j] / mf - xh * sum_dxhat_xhat[j] / mf);
                            gx.set(i, j, v);
                        }
                    }
                } else {
                    for i in 0..m {
                        for j in 0..n {
                            gx.set(i, j, g.get(i, j) * vg.data()[j] * inv_std[j]);
                        }
                    }
                }
                add_to(grads, *x, gx);
                add_to(grads, *gamma, dgamma);
                add_to(grads, *beta, dbeta);
            }
            Op::BceLogits { logits, targets } => {
                let vl = &self.nodes[*logits].value;
                let clamp = F::from_f64(BCE_LOGIT_CLAMP);
                let mut gl = g.clone();
                for ((x, &l), &y) in gl.data_mut().iter_mut().zip(vl.data()).zip(targets.data()) {
                    let lc = l.max(-clamp).min(clamp);
                    *x *= sigmoid_scalar(lc) - y;
                }
                add_to(grads, *logits, gl);
            }
            Op::CeRows { logits, targets } => {
                let vl = &self.nodes[*logits].value;
                let mut gl = Tensor::zeros(vl.rows(), vl.cols());
                for i in 0..vl.rows() {
                    let row = vl.row(i);
                    let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
                    let denom: F = row.iter().map(|&v| (v - mx).exp()).sum();
                    let gi = g.get(i, 0);
                    for (j, x) in gl.row_mut(i).iter_mut().enumerate() {
                        let softmax = (row[j] - mx).exp() / denom;
                        let indicator = if j == targets[i] { F::one() } else { F::zero() };
                        *x = gi * (softmax - indicator);
                    }
                }
                add_to(grads, *logits, gl);
            }
            Op::L2NormRows(a, eps) => {
                let va = &self.nodes[*a].value;
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for i in 0..va.rows() {
                    let row = va.row(i);
                    let norm = row_norm(row, *eps);
                    let dot: F = row.iter().zip(g.row(i)).map(|(&x, &gv)| x * gv).sum();
                    let n3 = norm * norm * norm;
                    for (j, x) in ga.row_mut(i).iter_mut().enumerate() {
                        *x = g.row(i)[j] / norm - row[j] * dot / n3;
                    }
                }
                add_to(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let shape = self.nodes[*a].value.shape();
                add_to(grads, *a, Tensor::full(shape.0, shape.1, g.get(0, 0)));
            }
            Op::MeanAll(a) => {
                let shape = self.nodes[*a].value.shape();
                let v = g.get(0, 0) / F::from_f64((shape.0 * shape.1) as f64);
                add_to(grads, *a, Tensor::full(shape.0, shape.1, v));
            }
        }
        Ok(())
    }
}

fn sigmoid_scalar<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn row_norm<F: Real>(row: &[F], eps: F) -> F {
    let sumsq: F = row.iter().map(|&x| x * x).sum();
    (sumsq + eps * eps).sqrt()
}

/// Gradients from one backward pass, indexed by tape node.
pub struct Grads<F: Real> {
    by_node: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Grads<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Binds tape leaves to named parameters across one or more stores, memoizing
/// so a parameter used twice shares one leaf (gradients then accumulate).
pub struct Session<'t, F: Real> {
    pub tape: &'t mut Tape<F>,
    memo: HashMap<(u64, String), Var>,
    registered: Vec<(u64, String, Var)>,
}

impl<'t, F: Real> Session<'t, F> {
    pub fn new(tape: &'t mut Tape<F>) -> Self {
        Session { tape, memo: HashMap::new(), registered: Vec::new() }
    }

    /// Leaf for a named parameter in `store`.
    pub fn param(&mut self, store: &super::adam::ParamStore<F>, name: &str) -> Result<Var> {
        let key = (store.uid(), name.to_string());
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let tensor = store
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))?
            .clone();
        let var = self.tape.leaf(tensor)?;
        self.memo.insert(key.clone(), var);
        self.registered.push((key.0, key.1, var));
        Ok(var)
    }

    pub fn constant(&mut self, t: Tensor<F>) -> Result<Var> {
        self.tape.leaf(t)
    }

    /// Every (store uid, parameter name, leaf) registered this session.
    pub fn registered(&self) -> &[(u64, String, Var)] {
        &self.registered
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t<F: Real>(rows: usize, cols: usize, data: &[f64]) -> Tensor<F> {
        Tensor::from_vec(rows, cols, data.iter().map(|&x| F::from_f64(x)).collect()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0)).unwrap();
        let s = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(s).get(0, 0), 0.5);
    }

    #[test]
    fn segment_mean_example() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(3, 1, &[2.0, 4.0, 6.0])).unwrap();
        let m = tape.segment_mean(x, vec![0, 0, 1], 2).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0, 6.0]);
    }

    #[test]
    fn bce_gradient_at_zero_logit_label_one() {
        // d/dx bce(x, 1) at x=0 is sigma(0) - 1 = -0.5
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0)).unwrap();
        let l = tape.bce_with_logits(x, Tensor::scalar(1.0)).unwrap();
        let loss = tape.sum_all(l).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gx = grads.get(x).unwrap().get(0, 0);
        assert!((gx - (-0.5)).abs() < 1e-12);
        // matches a central finite difference
        let f = |x: f64| x.max(0.0) - x + (1.0 + (-x.abs()).exp()).ln();
        let eps = 1e-6;
        let numeric = (f(eps) - f(-eps)) / (2.0 * eps);
        assert!((gx - numeric).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_c() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(2, 7)).unwrap();
        let ce = tape.cross_entropy_rows(logits, vec![3, 0]).unwrap();
        let mean = tape.mean_all(ce).unwrap();
        assert!((tape.value(mean).get(0, 0) - (7.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn fanout_accumulates_gradients() {
        // loss = sum(x*x) -> dx = 2x
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(1, 3, &[1.0, -2.0, 3.0])).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_is_seeded() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(t(4, 4, &[1.0; 16])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = tape.dropout(x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(e, x);
        let d1 = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let v = tape.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
            tape.value(v).clone()
        };
        let d2 = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let v = tape.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
            tape.value(v).clone()
        };
        assert_eq!(d1.data(), d2.data());
        // inverted dropout: surviving entries are scaled by 2
        assert!(d1.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn batchnorm_eval_is_affine_with_running_stats() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let gamma = tape.leaf(t(1, 2, &[2.0, 1.0])).unwrap();
        let beta = tape.leaf(t(1, 2, &[0.5, -0.5])).unwrap();
        let rmean = t(1, 2, &[1.0, 1.0]);
        let rvar = t(1, 2, &[4.0, 1.0]);
        let eps = 0.0_f64;
        let (y, stats) = tape
            .batchnorm(x, gamma, beta, (&rmean, &rvar), Mode::Eval, eps)
            .unwrap();
        assert!(stats.is_none());
        // y = gamma*(x-mean)/sqrt(var) + beta
        let v = tape.value(y);
        assert!((v.get(0, 0) - 0.5).abs() < 1e-12); // 2*(1-1)/2 + 0.5
        assert!((v.get(1, 0) - 2.5).abs() < 1e-12); // 2*(3-1)/2 + 0.5
        assert!((v.get(0, 1) - 0.5).abs() < 1e-12); // 1*(2-1)/1 - 0.5
    }

    #[test]
    fn non_finite_output_is_divergence() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::scalar(1e19f32)).unwrap();
        let y = tape.mul(x, x).unwrap(); // 1e38 is still finite in f32
        match tape.mul(y, y) {
            Err(Error::Divergence(_)) => {}
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        let b = tape.leaf(Tensor::zeros(3, 2)).unwrap();
        assert!(matches!(tape.add(a, b), Err(Error::InvalidArgument(_))));
    }
}
