//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its inputs. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates gradients into every node that depends on a differentiable
//! leaf. Constant leaves and everything computed only from constants are
//! skipped.

use crate::error::{NnError, Result};
use crate::tensor::{gemm, Tensor};

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
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    MeanRows(usize),
    SegmentMean { src: usize, seg: Vec<usize>, counts: Vec<usize> },
    GatherRows { src: usize, idx: Vec<usize> },
    MaskedSoftmax { src: usize, mask: Vec<bool> },
    SegmentLogSoftmax { src: usize, offsets: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the output does not depend on `v`.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::Shape { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("shapes checked")
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let out = zip_map(x, y, |p, q| p + q);
        Ok(self.push(out, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds the `1×c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if y.rows() != 1 || y.cols() != x.cols() {
            return Err(NnError::Shape { op: "add_row", left: x.shape(), right: y.shape() });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, &bias) in out.row_slice_mut(r).iter_mut().zip(y.data()) {
                *o += bias;
            }
        }
        Ok(self.push(out, Op::AddRow(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let out = zip_map(x, y, |p, q| p - q);
        Ok(self.push(out, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let out = zip_map(x, y, |p, q| p * q);
        Ok(self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a.0, c), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a.0), &[a.0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(NnError::Shape { op: "matmul", left: x.shape(), right: y.shape() });
        }
        let mut out = Tensor::zeros(x.rows(), y.cols());
        gemm(x, false, y, false, 0.0, &mut out);
        Ok(self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a.0), &[a.0])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a.0), &[a.0])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a.0), &[a.0])
    }

    /// Side-by-side concatenation; all parts need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Invalid("concat_cols of nothing".into()));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(NnError::Shape { op: "concat_cols", left: self.shape(first), right: self.shape(p) });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_slice_mut(r);
            let mut at = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row_slice(r);
                dst[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(out, Op::ConcatCols(idx.clone()), &idx))
    }

    /// Stacks parts vertically; all parts need the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Invalid("concat_rows of nothing".into()));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(NnError::Shape { op: "concat_rows", left: self.shape(first), right: v.shape() });
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(out, Op::ConcatRows(idx.clone()), &idx))
    }

    /// Mean over the rows of `a`, as a `1×c` row. The mean of no rows is zero.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols());
        if x.rows() > 0 {
            let inv = 1.0 / x.rows() as f64;
            for r in 0..x.rows() {
                for (o, v) in out.data_mut().iter_mut().zip(x.row_slice(r)) {
                    *o += v * inv;
                }
            }
        }
        self.push(out, Op::MeanRows(a.0), &[a.0])
    }

    /// Row `i` of the result is the mean of the rows `e` of `src` with
    /// `seg[e] == i`; segments with no rows are zero.
    pub fn segment_mean(&mut self, src: Var, seg: &[usize], segments: usize) -> Result<Var> {
        let x = self.value(src);
        if seg.len() != x.rows() {
            return Err(NnError::Shape { op: "segment_mean", left: x.shape(), right: (seg.len(), 1) });
        }
        let mut counts = vec![0usize; segments];
        for &s in seg {
            if s >= segments {
                return Err(NnError::Invalid(format!("segment id {s} out of range for {segments} segments")));
            }
            counts[s] += 1;
        }
        let mut out = Tensor::zeros(segments, x.cols());
        for (e, &s) in seg.iter().enumerate() {
            let inv = 1.0 / counts[s] as f64;
            for (o, v) in out.row_slice_mut(s).iter_mut().zip(x.row_slice(e)) {
                *o += v * inv;
            }
        }
        Ok(self.push(out, Op::SegmentMean { src: src.0, seg: seg.to_vec(), counts }, &[src.0]))
    }

    /// Rows of `src` picked by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(src);
        let mut out = Tensor::zeros(idx.len(), x.cols());
        for (r, &i) in idx.iter().enumerate() {
            if i >= x.rows() {
                return Err(NnError::Invalid(format!("row {i} out of range for shape {:?}", x.shape())));
            }
            out.row_slice_mut(r).copy_from_slice(x.row_slice(i));
        }
        Ok(self.push(out, Op::GatherRows { src: src.0, idx: idx.to_vec() }, &[src.0]))
    }

    /// Row-wise softmax restricted to entries where `mask` (same length as
    /// `src`, row-major) is true. Masked entries get probability exactly 0.
    pub fn masked_softmax(&mut self, src: Var, mask: &[bool]) -> Result<Var> {
        let x = self.value(src);
        if mask.len() != x.len() {
            return Err(NnError::Shape { op: "masked_softmax", left: x.shape(), right: (mask.len(), 1) });
        }
        let cols = x.cols();
        let mut out = Tensor::zeros(x.rows(), cols);
        for r in 0..x.rows() {
            let m = &mask[r * cols..(r + 1) * cols];
            let row = x.row_slice(r);
            let max = row.iter().zip(m).filter(|(_, &k)| k).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY && !m.iter().any(|&k| k) {
                return Err(NnError::Empty(format!("masked_softmax row {r} has every entry masked")));
            }
            let dst = out.row_slice_mut(r);
            let mut total = 0.0;
            for ((d, &v), &k) in dst.iter_mut().zip(row).zip(m) {
                if k {
                    *d = (v - max).exp();
                    total += *d;
                }
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        Ok(self.push(out, Op::MaskedSoftmax { src: src.0, mask: mask.to_vec() }, &[src.0]))
    }

    /// Log-softmax of an `L×1` column within contiguous segments
    /// `offsets[i]..offsets[i + 1]`.
    pub fn segment_log_softmax(&mut self, src: Var, offsets: &[usize]) -> Result<Var> {
        let x = self.value(src);
        if x.cols() != 1 || offsets.first() != Some(&0) || offsets.last() != Some(&x.rows()) {
            return Err(NnError::Shape {
                op: "segment_log_softmax",
                left: x.shape(),
                right: (offsets.last().copied().unwrap_or(0), 1),
            });
        }
        let v = x.data();
        let mut out = vec![0.0; v.len()];
        for w in offsets.windows(2) {
            if w[0] >= w[1] {
                return Err(NnError::Empty("segment_log_softmax has an empty segment".into()));
            }
            let seg = &v[w[0]..w[1]];
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + seg.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            for (o, &z) in out[w[0]..w[1]].iter_mut().zip(seg) {
                *o = z - lse;
            }
        }
        let out = Tensor::column(out);
        Ok(self.push(out, Op::SegmentLogSoftmax { src: src.0, offsets: offsets.to_vec() }, &[src.0]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(out, Op::Sum(a.0), &[a.0])
    }

    /// Mean over all entries; the mean of nothing is zero.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = if x.is_empty() { 0.0 } else { x.data().iter().sum::<f64>() / x.len() as f64 };
        self.push(Tensor::scalar(m), Op::Mean(a.0), &[a.0])
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi), &[a.0])
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("minimum", x, y)?;
        let out = zip_map(x, y, f64::min);
        Ok(self.push(out, Op::Minimum(a.0, b.0), &[a.0, b.0]))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.shape(out);
        if shape != (1, 1) {
            return Err(NnError::Shape { op: "backward", left: shape, right: (1, 1) });
        }
        self.backward_from(out, Tensor::scalar(1.0))
    }

    /// Backpropagates `seed` as the upstream gradient of `out`.
    pub fn backward_from(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(out) {
            return Err(NnError::Shape { op: "backward_from", left: self.shape(out), right: seed.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
        if !self.needs(i) {
            return;
        }
        match &mut grads[i] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Tensor>], i: usize, f: impl Fn(usize, f64) -> f64) {
        if !self.needs(i) {
            return;
        }
        let x = &self.nodes[i].value;
        let slot = grads[i].get_or_insert_with(|| Tensor::zeros(x.rows(), x.cols()));
        for (k, d) in slot.data_mut().iter_mut().enumerate() {
            *d += f(k, x.data()[k]);
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let value = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*b) {
                    let mut col_sums = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *s += v;
                        }
                    }
                    self.accumulate(grads, *b, col_sums);
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                self.accumulate_with(grads, *a, |k, _| g.data()[k] * y.data()[k]);
                self.accumulate_with(grads, *b, |k, _| g.data()[k] * x.data()[k]);
            }
            Op::Scale(a, c) => self.accumulate_with(grads, *a, |k, _| g.data()[k] * c),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if self.needs(*a) {
                    let beta = if grads[*a].is_some() { 1.0 } else { 0.0 };
                    let slot = grads[*a].get_or_insert_with(|| Tensor::zeros(x.rows(), x.cols()));
                    gemm(g, false, y, true, beta, slot);
                }
                if self.needs(*b) {
                    let beta = if grads[*b].is_some() { 1.0 } else { 0.0 };
                    let slot = grads[*b].get_or_insert_with(|| Tensor::zeros(y.rows(), y.cols()));
                    gemm(x, true, g, false, beta, slot);
                }
            }
            Op::Relu(a) => self.accumulate_with(grads, *a, |k, x| if x > 0.0 { g.data()[k] } else { 0.0 }),
            Op::Tanh(a) => {
                self.accumulate_with(grads, *a, |k, _| g.data()[k] * (1.0 - value.data()[k] * value.data()[k]))
            }
            Op::Exp(a) => self.accumulate_with(grads, *a, |k, _| g.data()[k] * value.data()[k]),
            Op::Log(a) => self.accumulate_with(grads, *a, |k, x| g.data()[k] / x),
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let cols = self.nodes[p].value.cols();
                    if self.needs(p) {
                        let mut part = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            part.row_slice_mut(r).copy_from_slice(&g.row_slice(r)[at..at + cols]);
                        }
                        self.accumulate(grads, p, part);
                    }
                    at += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for &p in parts {
                    let (rows, cols) = self.nodes[p].value.shape();
                    if self.needs(p) {
                        let data = g.data()[at * cols..(at + rows) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(rows, cols, data).expect("slice shape"));
                    }
                    at += rows;
                }
            }
            Op::MeanRows(a) => {
                let rows = self.nodes[*a].value.rows().max(1) as f64;
                let cols = g.cols();
                self.accumulate_with(grads, *a, |k, _| g.data()[k % cols] / rows);
            }
            Op::SegmentMean { src, seg, counts } => {
                let cols = g.cols();
                self.accumulate_with(grads, *src, |k, _| {
                    let s = seg[k / cols];
                    g.data()[s * cols + k % cols] / counts[s] as f64
                });
            }
            Op::GatherRows { src, idx } => {
                if self.needs(*src) {
                    let x = &self.nodes[*src].value;
                    let slot = grads[*src].get_or_insert_with(|| Tensor::zeros(x.rows(), x.cols()));
                    for (r, &row) in idx.iter().enumerate() {
                        for (d, v) in slot.row_slice_mut(row).iter_mut().zip(g.row_slice(r)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::MaskedSoftmax { src, mask } => {
                let cols = value.cols();
                let dots: Vec<f64> = (0..value.rows())
                    .map(|r| value.row_slice(r).iter().zip(g.row_slice(r)).map(|(p, q)| p * q).sum())
                    .collect();
                self.accumulate_with(grads, *src, |k, _| {
                    if mask[k] {
                        value.data()[k] * (g.data()[k] - dots[k / cols])
                    } else {
                        0.0
                    }
                });
            }
            Op::SegmentLogSoftmax { src, offsets } => {
                let mut delta = vec![0.0; value.len()];
                for w in offsets.windows(2) {
                    let total: f64 = g.data()[w[0]..w[1]].iter().sum();
                    for k in w[0]..w[1] {
                        delta[k] = g.data()[k] - value.data()[k].exp() * total;
                    }
                }
                self.accumulate_with(grads, *src, |k, _| delta[k]);
            }
            Op::Sum(a) => {
                let up = g.item();
                self.accumulate_with(grads, *a, |_, _| up);
            }
            Op::Mean(a) => {
                let n = self.nodes[*a].value.len().max(1) as f64;
                let up = g.item() / n;
                self.accumulate_with(grads, *a, |_, _| up);
            }
            Op::Clamp(a, lo, hi) => {
                self.accumulate_with(grads, *a, |k, x| if x >= *lo && x <= *hi { g.data()[k] } else { 0.0 })
            }
            Op::Minimum(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                self.accumulate_with(grads, *a, |k, _| if x.data()[k] <= y.data()[k] { g.data()[k] } else { 0.0 });
                self.accumulate_with(grads, *b, |k, _| if x.data()[k] <= y.data()[k] { 0.0 } else { g.data()[k] });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_backward() {
        let mut t = Tape::new();
        let x = t.var(Tensor::row(vec![-1.0, 2.0]));
        let y = t.relu(x);
        let g = t.backward_from(y, Tensor::row(vec![1.0, 1.0])).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn masked_softmax_symmetry() {
        let mut t = Tape::new();
        let x = t.var(Tensor::row(vec![0.0, 0.0, 0.0]));
        let p = t.masked_softmax(x, &[true, true, false]).unwrap();
        assert_eq!(t.value(p).data(), &[0.5, 0.5, 0.0]);
        let g = t.backward_from(p, Tensor::row(vec![1.0, -2.0, 5.0])).unwrap();
        assert_eq!(g.get(x).unwrap().data()[2], 0.0);
    }

    #[test]
    fn masked_softmax_rejects_all_masked() {
        let mut t = Tape::new();
        let x = t.var(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(t.masked_softmax(x, &[false, false]), Err(NnError::Empty(_))));
    }

    #[test]
    fn mean_of_set_splits_gradient() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![2.0, 4.0]));
        let m = t.mean_rows(x);
        assert_eq!(t.value(m).data(), &[3.0]);
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn segment_mean_values_and_empty_segments() {
        let mut t = Tape::new();
        let x = t.var(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![10.0, 0.0]]).unwrap());
        let m = t.segment_mean(x, &[0, 0, 2], 3).unwrap();
        assert_eq!(t.value(m).data(), &[2.0, 3.0, 0.0, 0.0, 10.0, 0.0]);
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.var(Tensor::zeros(2, 3));
        let b = t.var(Tensor::zeros(2, 3));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("matmul"), "{err}");
        let c = t.constant(Tensor::zeros(3, 2));
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn segment_log_softmax_normalizes_each_segment() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![1.0, 2.0, 3.0, -1.0, 0.5]));
        let y = t.segment_log_softmax(x, &[0, 3, 5]).unwrap();
        let v = t.value(y).data();
        let s1: f64 = v[..3].iter().map(|z| z.exp()).sum();
        let s2: f64 = v[3..].iter().map(|z| z.exp()).sum();
        assert!((s1 - 1.0).abs() < 1e-15 && (s2 - 1.0).abs() < 1e-15);
        assert!(t.segment_log_softmax(x, &[0, 0, 5]).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::row(vec![1.0, 2.0]));
        let x = t.var(Tensor::row(vec![3.0, 4.0]));
        let y = t.mul(c, x).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.var(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let g = t.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 7.0);
    }

    #[test]
    fn clamp_and_minimum_route_gradients() {
        let mut t = Tape::new();
        let x = t.var(Tensor::row(vec![0.5, 1.0, 1.5]));
        let c = t.clamp(x, 0.8, 1.2);
        assert_eq!(t.value(c).data(), &[0.8, 1.0, 1.2]);
        let m = t.minimum(x, c).unwrap();
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        // min(x, clamp(x)): x wins below the window, clamp wins above.
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 0.0]);
    }
}
