//! Reverse-mode differentiation over whole-matrix primitives.
//!
//! A [`Tape`] is the computation record of one forward evaluation: each
//! primitive step is appended with its cached output, and [`Tape::backward`]
//! replays the steps in reverse exactly once to produce parameter gradients.

use std::sync::Arc;

use crate::error::{GdgnnError, Result};
use crate::tensor::Matrix;

pub type VarId = usize;

/// Pooling reducer shared by geodesic, node and graph pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reducer {
    #[default]
    Sum,
    Mean,
    Max,
}

impl std::str::FromStr for Reducer {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Reducer::Sum),
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            other => Err(GdgnnError::InvalidParameter(format!("unknown reducer '{other}'"))),
        }
    }
}

impl std::fmt::Display for Reducer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reducer::Sum => "sum",
            Reducer::Mean => "mean",
            Reducer::Max => "max",
        })
    }
}

/// A sparse row operator `out[r] = Σ coeff · in[col]`, rows in ascending
/// column order.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub in_rows: usize,
}

impl SparseOperator {
    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.in_rows, "sparse operator input rows");
        let mut out = Matrix::zeros(self.rows(), x.cols());
        for r in 0..self.rows() {
            let o = out.row_mut(r);
            for k in self.offsets[r]..self.offsets[r + 1] {
                let c = self.coeffs[k];
                for (oj, xj) in o.iter_mut().zip(x.row(self.cols[k])) {
                    *oj += c * xj;
                }
            }
        }
        out
    }

    /// `grad_in += S^T grad_out`.
    pub fn apply_transpose_into(&self, grad_out: &Matrix, grad_in: &mut Matrix) {
        for r in 0..self.rows() {
            let g = grad_out.row(r);
            for k in self.offsets[r]..self.offsets[r + 1] {
                let c = self.coeffs[k];
                for (ij, gj) in grad_in.row_mut(self.cols[k]).iter_mut().zip(g) {
                    *ij += c * gj;
                }
            }
        }
    }
}

/// Index lists: output row `i` pools input rows `members(i)`.
#[derive(Debug, Clone, Default)]
pub struct Segments {
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl Segments {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            members: Vec::new(),
        }
    }

    pub fn push(&mut self, members: impl IntoIterator<Item = usize>) {
        self.members.extend(members);
        self.offsets.push(self.members.len());
    }

    pub fn singletons(rows: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new();
        for r in rows {
            s.push([r]);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Pools rows of `x` per segment. For `Max`, also returns the arg-max row of
/// every output entry (`usize::MAX` for an empty segment).
pub fn segment_reduce(x: &Matrix, segments: &Segments, reducer: Reducer) -> (Matrix, Option<Vec<usize>>) {
    let cols = x.cols();
    let mut out = Matrix::zeros(segments.len(), cols);
    let mut argmax = (reducer == Reducer::Max).then(|| vec![usize::MAX; segments.len() * cols]);
    for i in 0..segments.len() {
        let members = segments.members(i);
        if members.is_empty() {
            continue;
        }
        let o = out.row_mut(i);
        match reducer {
            Reducer::Sum | Reducer::Mean => {
                for &m in members {
                    for (oj, xj) in o.iter_mut().zip(x.row(m)) {
                        *oj += xj;
                    }
                }
                if reducer == Reducer::Mean {
                    let inv = 1.0 / members.len() as f64;
                    o.iter_mut().for_each(|v| *v *= inv);
                }
            }
            Reducer::Max => {
                let am = argmax.as_mut().unwrap();
                for j in 0..cols {
                    let mut best = members[0];
                    for &m in &members[1..] {
                        if x.get(m, j) > x.get(best, j) {
                            best = m;
                        }
                    }
                    o[j] = x.get(best, j);
                    am[i * cols + j] = best;
                }
            }
        }
    }
    (out, argmax)
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(VarId, VarId),
    AddBias(VarId, VarId),
    Relu(VarId),
    Propagate(VarId, Arc<SparseOperator>),
    /// `(1 + eps) x + A x`
    GinCombine {
        x: VarId,
        eps: VarId,
        adj: Arc<SparseOperator>,
    },
    Segment {
        x: VarId,
        segments: Arc<Segments>,
        reducer: Reducer,
        argmax: Option<Vec<usize>>,
    },
    Concat(Vec<VarId>),
    StackRows(Vec<VarId>),
    /// Mean binary cross-entropy on logits.
    BceWithLogits(VarId, Vec<f64>),
    /// Mean softmax cross-entropy on logits.
    SoftmaxXent(VarId, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    /// Whether any parameter feeds into this value.
    live: bool,
}

impl Op {
    fn inputs(&self) -> Vec<VarId> {
        match self {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::AddBias(a, b) => vec![*a, *b],
            Op::Relu(a) | Op::Propagate(a, _) => vec![*a],
            Op::GinCombine { x, eps, .. } => vec![*x, *eps],
            Op::Segment { x, .. } => vec![*x],
            Op::Concat(parts) | Op::StackRows(parts) => parts.clone(),
            Op::BceWithLogits(z, _) | Op::SoftmaxXent(z, _) => vec![*z],
        }
    }
}

/// The ordered record of primitive forward steps with cached activations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
    gnn_passes: usize,
}

/// Gradients keyed by parameter slot.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    slots: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&Matrix> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    /// Gradient for every slot, zero-filled for parameters the record never
    /// touched.
    pub fn dense(&self, shapes: &[(usize, usize)]) -> Vec<Matrix> {
        shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| self.get(i).cloned().unwrap_or_else(|| Matrix::zeros(r, c)))
            .collect()
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

    pub fn value(&self, id: VarId) -> &Matrix {
        &self.nodes[id].value
    }

    /// Number of message-passing passes recorded on this tape.
    pub fn gnn_passes(&self) -> usize {
        self.gnn_passes
    }

    pub(crate) fn note_gnn_pass(&mut self) {
        self.gnn_passes += 1;
    }

    fn push(&mut self, value: Matrix, op: Op) -> VarId {
        let live = matches!(op, Op::Param(_)) || op.inputs().iter().any(|&i| self.nodes[i].live);
        self.nodes.push(Node { value, op, live });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Matrix) -> VarId {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, slot: usize, value: &Matrix) -> VarId {
        self.push(value.clone(), Op::Param(slot))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add_bias(&mut self, a: VarId, bias: VarId) -> Result<VarId> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(GdgnnError::Shape(format!(
                "bias {}x{} for activations {}x{}",
                b.rows(),
                b.cols(),
                x.rows(),
                x.cols()
            )));
        }
        let mut v = x.clone();
        for r in 0..v.rows() {
            for (o, bj) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *o += bj;
            }
        }
        Ok(self.push(v, Op::AddBias(a, bias)))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn propagate(&mut self, x: VarId, op: Arc<SparseOperator>) -> Result<VarId> {
        if self.value(x).rows() != op.in_rows {
            return Err(GdgnnError::Shape(format!(
                "propagation over {} nodes applied to {} rows",
                op.in_rows,
                self.value(x).rows()
            )));
        }
        let v = op.apply(self.value(x));
        Ok(self.push(v, Op::Propagate(x, op)))
    }

    pub fn gin_combine(&mut self, x: VarId, eps: VarId, adj: Arc<SparseOperator>) -> Result<VarId> {
        if self.value(x).rows() != adj.in_rows {
            return Err(GdgnnError::Shape("GIN aggregation row mismatch".into()));
        }
        let e = self.value(eps).get(0, 0);
        let mut v = adj.apply(self.value(x));
        for (o, xi) in v.as_mut_slice().iter_mut().zip(self.value(x).as_slice()) {
            *o += (1.0 + e) * xi;
        }
        Ok(self.push(v, Op::GinCombine { x, eps, adj }))
    }

    pub fn segment(&mut self, x: VarId, segments: Arc<Segments>, reducer: Reducer) -> Result<VarId> {
        let rows = self.value(x).rows();
        if let Some(bad) = segments.members.iter().find(|&&m| m >= rows) {
            return Err(GdgnnError::Shape(format!("segment member {bad} >= {rows} rows")));
        }
        let (v, argmax) = segment_reduce(self.value(x), &segments, reducer);
        Ok(self.push(
            v,
            Op::Segment {
                x,
                segments,
                reducer,
                argmax,
            },
        ))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(GdgnnError::Shape("concat row mismatch".into()));
        }
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                v.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// Row-wise stacking of equally wide blocks.
    pub fn stack_rows(&mut self, parts: &[VarId]) -> Result<VarId> {
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(GdgnnError::Shape("stack_rows column mismatch".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).as_slice());
        }
        let rows = data.len() / cols.max(1);
        let v = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(v, Op::StackRows(parts.to_vec())))
    }

    pub fn bce_with_logits(&mut self, logits: VarId, targets: &[f64]) -> Result<VarId> {
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() != targets.len() || targets.is_empty() {
            return Err(GdgnnError::Shape(format!(
                "{} targets for logits {}x{}",
                targets.len(),
                z.rows(),
                z.cols()
            )));
        }
        let loss: f64 = z
            .as_slice()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        Ok(self.push(Matrix::scalar(loss), Op::BceWithLogits(logits, targets.to_vec())))
    }

    pub fn softmax_xent(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        let z = self.value(logits);
        if z.rows() != labels.len() || labels.is_empty() || labels.iter().any(|&l| l >= z.cols()) {
            return Err(GdgnnError::Shape(format!(
                "{} labels for logits {}x{}",
                labels.len(),
                z.rows(),
                z.cols()
            )));
        }
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        loss /= labels.len() as f64;
        Ok(self.push(Matrix::scalar(loss), Op::SoftmaxXent(logits, labels.to_vec())))
    }

    /// Propagates `out_grad` (the gradient of a scalar objective with respect
    /// to `output`) back to every parameter slot. The record can be replayed
    /// only once.
    pub fn backward(&mut self, output: VarId, out_grad: Matrix) -> Result<Gradients> {
        if self.consumed {
            return Err(GdgnnError::RecordConsumed);
        }
        if out_grad.shape() != self.value(output).shape() {
            return Err(GdgnnError::Shape(format!(
                "output gradient {:?} for value {:?}",
                out_grad.shape(),
                self.value(output).shape()
            )));
        }
        self.consumed = true;
        let live: Vec<bool> = self.nodes.iter().map(|n| n.live).collect();
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output] = Some(out_grad);
        let mut params = Gradients::default();

        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.live {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => {
                    if params.slots.len() <= *slot {
                        params.slots.resize(*slot + 1, None);
                    }
                    match &mut params.slots[*slot] {
                        Some(acc) => acc.add_assign(&g),
                        s @ None => *s = Some(g),
                    }
                }
                Op::MatMul(a, b) => {
                    if live[*a] {
                        let ga = g.matmul_t(&self.nodes[*b].value)?;
                        accumulate(&mut grads, &live, *a, ga);
                    }
                    if live[*b] {
                        let gb = self.nodes[*a].value.t_matmul(&g)?;
                        accumulate(&mut grads, &live, *b, gb);
                    }
                }
                Op::AddBias(a, b) => {
                    accumulate(&mut grads, &live, *b, g.column_sums());
                    accumulate(&mut grads, &live, *a, g);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let mut ga = g;
                    for (gi, xi) in ga.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if *xi <= 0.0 {
                            *gi = 0.0;
                        }
                    }
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::Propagate(x, op) => {
                    let xv = &self.nodes[*x].value;
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    op.apply_transpose_into(&g, &mut gx);
                    accumulate(&mut grads, &live, *x, gx);
                }
                Op::GinCombine { x, eps, adj } => {
                    let xv = &self.nodes[*x].value;
                    let e = self.nodes[*eps].value.get(0, 0);
                    let geps: f64 = g.as_slice().iter().zip(xv.as_slice()).map(|(a, b)| a * b).sum();
                    let mut gx = g.clone();
                    gx.scale(1.0 + e);
                    adj.apply_transpose_into(&g, &mut gx);
                    accumulate(&mut grads, &live, *eps, Matrix::scalar(geps));
                    accumulate(&mut grads, &live, *x, gx);
                }
                Op::Segment {
                    x,
                    segments,
                    reducer,
                    argmax,
                } => {
                    let xv = &self.nodes[*x].value;
                    let cols = xv.cols();
                    let mut gx = Matrix::zeros(xv.rows(), cols);
                    for i in 0..segments.len() {
                        let members = segments.members(i);
                        if members.is_empty() {
                            continue;
                        }
                        let gi = g.row(i);
                        match reducer {
                            Reducer::Sum | Reducer::Mean => {
                                let w = if *reducer == Reducer::Mean {
                                    1.0 / members.len() as f64
                                } else {
                                    1.0
                                };
                                for &m in members {
                                    for (a, b) in gx.row_mut(m).iter_mut().zip(gi) {
                                        *a += w * b;
                                    }
                                }
                            }
                            Reducer::Max => {
                                let am = argmax.as_ref().expect("max pooling records argmax");
                                for j in 0..cols {
                                    let m = am[i * cols + j];
                                    let cur = gx.get(m, j);
                                    gx.set(m, j, cur + gi[j]);
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, &live, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.nodes[p].value.cols();
                        if !live[p] {
                            off += pc;
                            continue;
                        }
                        let mut gp = Matrix::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                        }
                        off += pc;
                        accumulate(&mut grads, &live, p, gp);
                    }
                }
                Op::StackRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pr = self.nodes[p].value.rows();
                        let gp = Matrix::from_vec(pr, g.cols(), g.as_slice()[off * g.cols()..(off + pr) * g.cols()].to_vec())?;
                        off += pr;
                        accumulate(&mut grads, &live, p, gp);
                    }
                }
                Op::BceWithLogits(z, targets) => {
                    let zv = &self.nodes[*z].value;
                    let scale = g.get(0, 0) / targets.len() as f64;
                    let data = zv
                        .as_slice()
                        .iter()
                        .zip(targets)
                        .map(|(&x, &y)| (sigmoid(x) - y) * scale)
                        .collect();
                    accumulate(&mut grads, &live, *z, Matrix::from_vec(zv.rows(), 1, data)?);
                }
                Op::SoftmaxXent(z, labels) => {
                    let zv = &self.nodes[*z].value;
                    let scale = g.get(0, 0) / labels.len() as f64;
                    let mut gz = Matrix::zeros(zv.rows(), zv.cols());
                    for (r, &y) in labels.iter().enumerate() {
                        let row = zv.row(r);
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for (j, gj) in gz.row_mut(r).iter_mut().enumerate() {
                            let p = (row[j] - m).exp() / denom;
                            *gj = scale * (p - if j == y { 1.0 } else { 0.0 });
                        }
                    }
                    accumulate(&mut grads, &live, *z, gz);
                }
            }
        }
        Ok(params)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], live: &[bool], id: VarId, g: Matrix) {
    if !live[id] {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_layer_gradient_is_input_transpose_times_out_grad() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.4, 0.5, 0.6]]).unwrap();
        let g = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 0.0], vec![3.0, 1.0, 1.0]]).unwrap();
        let mut tape = Tape::new();
        let xi = tape.constant(x.clone());
        let wi = tape.param(0, &w);
        let out = tape.matmul(xi, wi).unwrap();
        let grads = tape.backward(out, g.clone()).unwrap();
        assert_eq!(grads.get(0).unwrap(), &x.t_matmul(&g).unwrap());
    }

    #[test]
    fn zero_out_grad_gives_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(3, 2, 1.5));
        let w = tape.param(0, &Matrix::filled(2, 2, 0.3));
        let b = tape.param(1, &Matrix::filled(1, 2, -0.1));
        let h = tape.matmul(x, w).unwrap();
        let h = tape.add_bias(h, b).unwrap();
        let h = tape.relu(h);
        let grads = tape.backward(h, Matrix::zeros(3, 2)).unwrap();
        for m in grads.dense(&[(2, 2), (1, 2)]) {
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.param(0, &Matrix::scalar(2.0));
        tape.backward(w, Matrix::scalar(1.0)).unwrap();
        assert!(matches!(
            tape.backward(w, Matrix::scalar(1.0)),
            Err(GdgnnError::RecordConsumed)
        ));
    }

    #[test]
    fn segment_reducers() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0], vec![-1.0, 0.0]]).unwrap();
        let mut seg = Segments::new();
        seg.push([0, 1, 2]);
        seg.push([]);
        seg.push([2]);
        let (s, _) = segment_reduce(&x, &seg, Reducer::Sum);
        assert_eq!(s.row(0), &[3.0, 7.0]);
        assert_eq!(s.row(1), &[0.0, 0.0]);
        let (m, _) = segment_reduce(&x, &seg, Reducer::Mean);
        assert_eq!(m.row(0), &[1.0, 7.0 * (1.0 / 3.0)]);
        let (mx, am) = segment_reduce(&x, &seg, Reducer::Max);
        assert_eq!(mx.row(0), &[3.0, 5.0]);
        assert_eq!(&am.unwrap()[..2], &[1, 0]);
    }

    #[test]
    fn bce_matches_closed_form() {
        let mut tape = Tape::new();
        let z = tape.param(0, &Matrix::from_vec(2, 1, vec![0.0, 2.0]).unwrap());
        let l = tape.bce_with_logits(z, &[1.0, 0.0]).unwrap();
        let want = (2f64.ln() + (1.0 + 2f64.exp()).ln()) / 2.0;
        assert!((tape.value(l).get(0, 0) - want).abs() < 1e-12);
        let g = tape.backward(l, Matrix::scalar(1.0)).unwrap();
        let gz = g.get(0).unwrap();
        assert!((gz.get(0, 0) - (0.5 - 1.0) / 2.0).abs() < 1e-12);
        assert!((gz.get(1, 0) - sigmoid(2.0) / 2.0).abs() < 1e-12);
    }
}
