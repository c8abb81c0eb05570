//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Operations evaluate eagerly as they are recorded, so the tape holds every
//! forward value; `backward` replays the records in reverse creation order,
//! which is a valid reverse topological order because operands always precede
//! their results. One tape is single-threaded; separate tapes are independent.

use crate::array::{matmul, matmul_a_bt, matmul_at_b, Array2D};
use crate::error::{Error, Result};

/// Stabilizer inside the layer-norm variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Probabilities are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before logs.
pub const BCE_CLAMP: f64 = 1e-7;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Leaf with no gradient (data, labels, constants).
    Input,
    /// Leaf carrying a gradient slot in the resulting `GradientSet`.
    Param { slot: usize },
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// a: m x n plus a 1 x n bias broadcast over rows.
    AddRow { a: NodeId, bias: NodeId },
    ElemMul { a: NodeId, b: NodeId },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNormRows { a: NodeId, gain: NodeId, bias: NodeId },
    /// Gather rows of `table`; one output row per entry of `rows`.
    Lookup { table: NodeId, rows: Vec<usize> },
    ConcatCols { parts: Vec<NodeId> },
    /// Mean over all entries, yielding a 1 x 1 scalar.
    MeanAll { a: NodeId },
    Log { a: NodeId },
    /// Elementwise binary cross-entropy of probabilities against labels.
    Bce { probs: NodeId, labels: NodeId },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2D,
    adjoint: Option<Array2D>,
}

/// One adjoint array per registered parameter, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    grads: Vec<Array2D>,
}

impl GradientSet {
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        GradientSet {
            grads: shapes.iter().map(|&(r, c)| Array2D::zeros(r, c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Array2D {
        &self.grads[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array2D> {
        self.grads.iter()
    }

    /// L2 norm of all adjoints concatenated.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(Array2D::sum_of_squares)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale_in_place(factor);
        }
    }

    /// self += factor * other; shapes must agree slot by slot.
    pub fn axpy_in_place(&mut self, factor: f64, other: &GradientSet) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::ShapeMismatch {
                op: "gradient_axpy",
                detail: format!("{} vs {} parameter slots", self.grads.len(), other.grads.len()),
            });
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.axpy_in_place(factor, b)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Array2D::all_finite)
    }
}

/// Linear combination sum_m coeffs[m] * sets[m].
pub fn weighted_sum(sets: &[GradientSet], coeffs: &[f64]) -> Result<GradientSet> {
    if sets.len() != coeffs.len() || sets.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "weighted_sum needs matching nonempty inputs, got {} sets and {} coefficients",
            sets.len(),
            coeffs.len()
        )));
    }
    let shapes: Vec<_> = sets[0].grads.iter().map(Array2D::shape).collect();
    let mut out = GradientSet::zeros(&shapes);
    for (set, &c) in sets.iter().zip(coeffs) {
        out.axpy_in_place(c, set)?;
    }
    Ok(out)
}

/// Scale every adjoint by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`; otherwise return the set unchanged.
pub fn clip_global_norm(mut grads: GradientSet, max_norm: f64) -> Result<GradientSet> {
    if max_norm <= 0.0 || !max_norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "max_norm must be positive and finite, got {max_norm}"
        )));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale_in_place(max_norm / norm);
    }
    Ok(grads)
}

/// Eagerly evaluated expression tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_shapes: Vec<(usize, usize)>,
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

    pub fn num_params(&self) -> usize {
        self.param_shapes.len()
    }

    /// Forward value held at `id`.
    pub fn value(&self, id: NodeId) -> &Array2D {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Array2D) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            adjoint: None,
        });
        id
    }

    pub fn input(&mut self, value: Array2D) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Register a differentiable leaf; its adjoint occupies the next slot of
    /// the `GradientSet` returned by `backward`.
    pub fn param(&mut self, value: Array2D) -> NodeId {
        let slot = self.param_shapes.len();
        self.param_shapes.push(value.shape());
        self.push(Op::Param { slot }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let mut value = va.clone();
        for (x, y) in value.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *x += y;
        }
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                detail: format!("{:?} plus row {:?}", va.shape(), vb.shape()),
            });
        }
        let mut value = va.clone();
        let brow = vb.row(0).to_vec();
        for r in 0..value.rows() {
            for (x, y) in value.row_mut(r).iter_mut().zip(&brow) {
                *x += y;
            }
        }
        Ok(self.push(Op::AddRow { a, bias }, value))
    }

    pub fn elem_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "elem_mul",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let mut value = va.clone();
        for (x, y) in value.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *x *= y;
        }
        Ok(self.push(Op::ElemMul { a, b }, value))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| x.max(0.0));
        Ok(self.push(Op::Relu { a }, value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        Ok(self.push(Op::Sigmoid { a }, value))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let mut value = va.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        Ok(self.push(Op::SoftmaxRows { a }, value))
    }

    /// Row-wise layer normalization followed by a learned affine map:
    /// y = gain * (x - mean) / sqrt(var + eps) + bias.
    pub fn layer_norm_rows(&mut self, a: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vg, vb) = (self.value(a), self.value(gain), self.value(bias));
        let n = va.cols();
        if vg.shape() != (1, n) || vb.shape() != (1, n) {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_rows",
                detail: format!(
                    "input {:?}, gain {:?}, bias {:?}",
                    va.shape(),
                    vg.shape(),
                    vb.shape()
                ),
            });
        }
        let mut value = va.clone();
        let g = vg.row(0).to_vec();
        let b = vb.row(0).to_vec();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let (mean, inv_std) = row_norm_stats(row);
            for (j, x) in row.iter_mut().enumerate() {
                *x = g[j] * (*x - mean) * inv_std + b[j];
            }
        }
        Ok(self.push(Op::LayerNormRows { a, gain, bias }, value))
    }

    /// Gather `rows` from an embedding table; output has one row per index.
    pub fn lookup(&mut self, table: NodeId, rows: &[usize]) -> Result<NodeId> {
        let vt = self.value(table);
        if let Some(&bad) = rows.iter().find(|&&r| r >= vt.rows()) {
            return Err(Error::ShapeMismatch {
                op: "lookup",
                detail: format!("row {bad} out of range for a {} row table", vt.rows()),
            });
        }
        let cols = vt.cols();
        let mut value = Array2D::zeros(rows.len(), cols);
        for (r, &idx) in rows.iter().enumerate() {
            value.row_mut(r).copy_from_slice(vt.row(idx));
        }
        Ok(self.push(
            Op::Lookup {
                table,
                rows: rows.to_vec(),
            },
            value,
        ))
    }

    /// Concatenate matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols of zero parts".into()));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("{} rows vs {} rows", rows, v.rows()),
                });
            }
            cols += v.cols();
        }
        let mut value = Array2D::zeros(rows, cols);
        for r in 0..rows {
            let out = value.row_mut(r);
            let mut offset = 0;
            for &p in parts {
                // Safe to index the tape immutably from a local borrow.
                let src = &self.nodes[p].value;
                out[offset..offset + src.cols()].copy_from_slice(src.row(r));
                offset += src.cols();
            }
        }
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    /// Mean over every entry, producing a scalar node.
    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::InvalidArgument("mean of an empty matrix".into()));
        }
        let mean = va.as_slice().iter().sum::<f64>() / va.len() as f64;
        Ok(self.push(Op::MeanAll { a }, Array2D::scalar(mean)))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::ln);
        Ok(self.push(Op::Log { a }, value))
    }

    /// Elementwise binary cross-entropy; probabilities are clamped into
    /// [BCE_CLAMP, 1 - BCE_CLAMP] before the logs.
    pub fn bce(&mut self, probs: NodeId, labels: NodeId) -> Result<NodeId> {
        let (vp, vl) = (self.value(probs), self.value(labels));
        if vp.shape() != vl.shape() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                detail: format!("{:?} vs {:?}", vp.shape(), vl.shape()),
            });
        }
        let mut value = vp.clone();
        for (x, &y) in value.as_mut_slice().iter_mut().zip(vl.as_slice()) {
            let p = x.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            *x = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        Ok(self.push(Op::Bce { probs, labels }, value))
    }

    /// Accumulate d(root)/d(param) for every registered parameter. The root
    /// must be a scalar node; forward values must already be on the tape
    /// (they are, for any id this tape produced).
    pub fn backward(&mut self, root: NodeId) -> Result<GradientSet> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidState(
                "backward on an empty tape; run a forward computation first".into(),
            ));
        }
        if root >= self.nodes.len() {
            return Err(Error::InvalidState(format!(
                "backward root {root} is not on the tape ({} nodes)",
                self.nodes.len()
            )));
        }
        if self.nodes[root].value.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("root must be 1x1, got {:?}", self.nodes[root].value.shape()),
            });
        }
        for node in &mut self.nodes {
            node.adjoint = None;
        }
        self.nodes[root].adjoint = Some(Array2D::scalar(1.0));

        let mut grads = GradientSet::zeros(&self.param_shapes);
        for i in (0..=root).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let grad_out = match node.adjoint.take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Input => {}
                Op::Param { slot } => {
                    grads.grads[*slot].axpy_in_place(1.0, &grad_out)?;
                }
                Op::MatMul { a, b } => {
                    let da = matmul_a_bt(&grad_out, &before[*b].value)?;
                    let db = matmul_at_b(&before[*a].value, &grad_out)?;
                    accumulate(&mut before[*a], da);
                    accumulate(&mut before[*b], db);
                }
                Op::Add { a, b } => {
                    accumulate(&mut before[*a], grad_out.clone());
                    accumulate(&mut before[*b], grad_out);
                }
                Op::AddRow { a, bias } => {
                    let mut db = Array2D::zeros(1, grad_out.cols());
                    for r in 0..grad_out.rows() {
                        for (s, &g) in db.row_mut(0).iter_mut().zip(grad_out.row(r)) {
                            *s += g;
                        }
                    }
                    accumulate(&mut before[*bias], db);
                    accumulate(&mut before[*a], grad_out);
                }
                Op::ElemMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = hadamard(&grad_out, &before[b].value);
                    let db = hadamard(&grad_out, &before[a].value);
                    accumulate(&mut before[a], da);
                    accumulate(&mut before[b], db);
                }
                Op::Relu { a } => {
                    let mut g = grad_out;
                    for (gv, &x) in g.as_mut_slice().iter_mut().zip(before[*a].value.as_slice()) {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut before[*a], g);
                }
                Op::Sigmoid { a } => {
                    let mut g = grad_out;
                    for (gv, &s) in g.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                        *gv *= s * (1.0 - s);
                    }
                    accumulate(&mut before[*a], g);
                }
                Op::SoftmaxRows { a } => {
                    let z = &node.value;
                    let mut g = grad_out;
                    for r in 0..g.rows() {
                        let zr = z.row(r);
                        let gr = g.row_mut(r);
                        let dot: f64 = gr.iter().zip(zr).map(|(gv, zv)| gv * zv).sum();
                        for (gv, &zv) in gr.iter_mut().zip(zr) {
                            *gv = zv * (*gv - dot);
                        }
                    }
                    accumulate(&mut before[*a], g);
                }
                Op::LayerNormRows { a, gain, bias } => {
                    let x = &before[*a].value;
                    let gvec = before[*gain].value.row(0).to_vec();
                    let n = x.cols();
                    let mut dx = Array2D::zeros(x.rows(), n);
                    let mut dgain = Array2D::zeros(1, n);
                    let mut dbias = Array2D::zeros(1, n);
                    for r in 0..x.rows() {
                        let xr = x.row(r);
                        let gr = grad_out.row(r);
                        let (mean, inv_std) = row_norm_stats(xr);
                        // dxhat and the two row reductions the input adjoint needs
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        let mut dxh = vec![0.0; n];
                        for j in 0..n {
                            let xh = (xr[j] - mean) * inv_std;
                            let d = gr[j] * gvec[j];
                            dxh[j] = d;
                            sum_dxh += d;
                            sum_dxh_xh += d * xh;
                            dgain.row_mut(0)[j] += gr[j] * xh;
                            dbias.row_mut(0)[j] += gr[j];
                        }
                        let inv_n = 1.0 / n as f64;
                        let dxr = dx.row_mut(r);
                        for j in 0..n {
                            let xh = (xr[j] - mean) * inv_std;
                            dxr[j] =
                                inv_std * (dxh[j] - inv_n * sum_dxh - xh * inv_n * sum_dxh_xh);
                        }
                    }
                    accumulate(&mut before[*a], dx);
                    accumulate(&mut before[*gain], dgain);
                    accumulate(&mut before[*bias], dbias);
                }
                Op::Lookup { table, rows } => {
                    let t = &before[*table].value;
                    let mut dt = Array2D::zeros(t.rows(), t.cols());
                    for (r, &idx) in rows.iter().enumerate() {
                        for (s, &g) in dt.row_mut(idx).iter_mut().zip(grad_out.row(r)) {
                            *s += g;
                        }
                    }
                    accumulate(&mut before[*table], dt);
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let cols = before[p].value.cols();
                        let mut dp = Array2D::zeros(grad_out.rows(), cols);
                        for r in 0..grad_out.rows() {
                            dp.row_mut(r)
                                .copy_from_slice(&grad_out.row(r)[offset..offset + cols]);
                        }
                        accumulate(&mut before[p], dp);
                        offset += cols;
                    }
                }
                Op::MeanAll { a } => {
                    let (rows, cols) = before[*a].value.shape();
                    let g = grad_out.at(0, 0) / (rows * cols) as f64;
                    accumulate(&mut before[*a], Array2D::filled(rows, cols, g));
                }
                Op::Log { a } => {
                    let mut g = grad_out;
                    for (gv, &x) in g.as_mut_slice().iter_mut().zip(before[*a].value.as_slice()) {
                        *gv /= x;
                    }
                    accumulate(&mut before[*a], g);
                }
                Op::Bce { probs, labels } => {
                    let p = &before[*probs].value;
                    let y = &before[*labels].value;
                    let mut g = grad_out;
                    for ((gv, &pv), &yv) in g
                        .as_mut_slice()
                        .iter_mut()
                        .zip(p.as_slice())
                        .zip(y.as_slice())
                    {
                        if pv <= BCE_CLAMP || pv >= 1.0 - BCE_CLAMP {
                            // clamped region is locally constant
                            *gv = 0.0;
                        } else {
                            *gv *= (pv - yv) / (pv * (1.0 - pv));
                        }
                    }
                    accumulate(&mut before[*probs], g);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(node: &mut Node, contribution: Array2D) {
    match &mut node.adjoint {
        Some(adj) => {
            adj.axpy_in_place(1.0, &contribution)
                .expect("adjoint shape tracks value shape");
        }
        None => node.adjoint = Some(contribution),
    }
}

fn hadamard(a: &Array2D, b: &Array2D) -> Array2D {
    let mut out = a.clone();
    for (x, y) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x *= y;
    }
    out
}

/// Population mean and 1/sqrt(var + eps) of one row.
fn row_norm_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}
