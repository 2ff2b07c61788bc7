//! One-shot message-passing encoder and the task head.
//!
//! Messages flow from neighbors and are combined at the receiver:
//!
//! * GCN-style: `H' = Â H W + b` with `Â = D^{-1/2}(A + I)D^{-1/2}`.
//! * GIN-style: `H' = MLP((1 + ε) H + A H)`, with a learnable `ε` per layer.
//!
//! Every layer but the last is followed by a rectifier. Neighbor sums run in
//! ascending neighbor order, so a forward pass is bitwise reproducible.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GdgnnError, Result};
use crate::graph::Graph;
use crate::tape::{Gradients, SparseOperator, Tape, VarId};
use crate::tensor::Matrix;

/// Node embeddings `h_v`, one row per node.
pub type EmbeddingMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Gcn,
    Gin,
}

impl std::str::FromStr for LayerKind {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerKind::Gcn),
            "gin" => Ok(LayerKind::Gin),
            other => Err(GdgnnError::InvalidParameter(format!("unknown layer kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayerKind::Gcn => "gcn",
            LayerKind::Gin => "gin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub head_input: usize,
    pub head_hidden: usize,
    pub outputs: usize,
}

/// All learnable tensors, stored flat in slot order:
/// per GCN layer `[W, b]`, per GIN layer `[ε, W1, b1, W2, b2]`, then the
/// head `[W1, b1, W2, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: LayerKind,
    pub dims: ModelDims,
    pub tensors: Vec<Matrix>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, `ε = 0`.
    pub fn init(kind: LayerKind, dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.layers == 0 || dims.head_hidden == 0 || dims.outputs == 0 {
            return Err(GdgnnError::InvalidParameter(format!("degenerate model dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |r: usize, c: usize| {
            let a = (6.0 / (r + c) as f64).sqrt();
            let data = (0..r * c).map(|_| rng.gen_range(-a..a)).collect();
            Matrix::from_vec(r, c, data).expect("sized")
        };
        let mut tensors = Vec::new();
        for l in 0..dims.layers {
            let fan_in = if l == 0 { dims.input } else { dims.hidden };
            match kind {
                LayerKind::Gcn => {
                    tensors.push(glorot(fan_in, dims.hidden));
                    tensors.push(Matrix::zeros(1, dims.hidden));
                }
                LayerKind::Gin => {
                    tensors.push(Matrix::scalar(0.0));
                    tensors.push(glorot(fan_in, dims.hidden));
                    tensors.push(Matrix::zeros(1, dims.hidden));
                    tensors.push(glorot(dims.hidden, dims.hidden));
                    tensors.push(Matrix::zeros(1, dims.hidden));
                }
            }
        }
        tensors.push(glorot(dims.head_input, dims.head_hidden));
        tensors.push(Matrix::zeros(1, dims.head_hidden));
        tensors.push(glorot(dims.head_hidden, dims.outputs));
        tensors.push(Matrix::zeros(1, dims.outputs));
        Ok(Self { kind, dims, tensors })
    }

    pub fn slots_per_layer(&self) -> usize {
        match self.kind {
            LayerKind::Gcn => 2,
            LayerKind::Gin => 5,
        }
    }

    pub fn head_offset(&self) -> usize {
        self.dims.layers * self.slots_per_layer()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Matrix::shape).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Registers every tensor on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .enumerate()
                .map(|(slot, t)| tape.param(slot, t))
                .collect(),
            kind: self.kind,
            dims: self.dims,
        }
    }

    fn validate(&self) -> Result<()> {
        let expected = self.head_offset() + 4;
        if self.tensors.len() != expected {
            return Err(GdgnnError::Shape(format!(
                "{} tensors, layout needs {expected}",
                self.tensors.len()
            )));
        }
        let d = self.dims;
        let mut want = Vec::new();
        for l in 0..d.layers {
            let fan_in = if l == 0 { d.input } else { d.hidden };
            match self.kind {
                LayerKind::Gcn => want.extend([(fan_in, d.hidden), (1, d.hidden)]),
                LayerKind::Gin => want.extend([
                    (1, 1),
                    (fan_in, d.hidden),
                    (1, d.hidden),
                    (d.hidden, d.hidden),
                    (1, d.hidden),
                ]),
            }
        }
        want.extend([
            (d.head_input, d.head_hidden),
            (1, d.head_hidden),
            (d.head_hidden, d.outputs),
            (1, d.outputs),
        ]);
        for (i, (have, want)) in self.shapes().iter().zip(&want).enumerate() {
            if have != want {
                return Err(GdgnnError::Shape(format!("tensor {i} is {have:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    /// Versioned text checkpoint. Values use shortest round-trip formatting,
    /// so save/load is bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let d = self.dims;
        let mut s = String::new();
        let _ = writeln!(s, "gdgnn-checkpoint 1");
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(
            s,
            "dims input={} hidden={} layers={} head_input={} head_hidden={} outputs={}",
            d.input, d.hidden, d.layers, d.head_input, d.head_hidden, d.outputs
        );
        let _ = writeln!(s, "tensors {}", self.tensors.len());
        for (i, t) in self.tensors.iter().enumerate() {
            let _ = writeln!(s, "tensor {i} {} {}", t.rows(), t.cols());
            let vals: Vec<String> = t.as_slice().iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| GdgnnError::Parse {
                    line: 0,
                    message: format!("unexpected end of checkpoint, expected {what}"),
                })
        };
        let perr = |line: usize, message: String| GdgnnError::Parse { line, message };

        let (ln, magic) = next("header")?;
        if magic != "gdgnn-checkpoint 1" {
            return Err(perr(ln, format!("unsupported checkpoint header '{magic}'")));
        }
        let (ln, kind) = next("kind")?;
        let kind: LayerKind = kind
            .strip_prefix("kind ")
            .ok_or_else(|| perr(ln, "expected 'kind'".into()))?
            .parse()?;
        let (ln, dims_line) = next("dims")?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| perr(ln, "expected 'dims'".into()))?
            .split_whitespace()
        {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(ln, format!("bad field '{kv}'")))?;
            let v: usize = v.parse().map_err(|_| perr(ln, format!("bad value in '{kv}'")))?;
            fields.insert(k.to_string(), v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| perr(ln, format!("missing dims field '{k}'")));
        let dims = ModelDims {
            input: get("input")?,
            hidden: get("hidden")?,
            layers: get("layers")?,
            head_input: get("head_input")?,
            head_hidden: get("head_hidden")?,
            outputs: get("outputs")?,
        };
        let (ln, count) = next("tensor count")?;
        let count: usize = count
            .strip_prefix("tensors ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| perr(ln, "expected 'tensors N'".into()))?;
        let mut tensors = Vec::with_capacity(count);
        for i in 0..count {
            let (ln, head) = next("tensor header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" || parts[1] != i.to_string() {
                return Err(perr(ln, format!("expected header for tensor {i}")));
            }
            let rows: usize = parts[2].parse().map_err(|_| perr(ln, "bad rows".into()))?;
            let cols: usize = parts[3].parse().map_err(|_| perr(ln, "bad cols".into()))?;
            let (ln, body) = next("tensor values")?;
            let vals = body
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| perr(ln, format!("bad value '{v}'"))))
                .collect::<Result<Vec<f64>>>()?;
            tensors.push(Matrix::from_vec(rows, cols, vals).map_err(|e| perr(ln, e.to_string()))?);
        }
        let params = Self { kind, dims, tensors };
        params.validate()?;
        Ok(params)
    }
}

/// Tape handles for every parameter slot.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<VarId>,
    kind: LayerKind,
    dims: ModelDims,
}

impl BoundParams {
    fn per_layer(&self) -> usize {
        match self.kind {
            LayerKind::Gcn => 2,
            LayerKind::Gin => 5,
        }
    }

    fn layer(&self, l: usize) -> &[VarId] {
        let k = self.per_layer();
        &self.vars[l * k..(l + 1) * k]
    }

    fn head(&self) -> &[VarId] {
        &self.vars[self.dims.layers * self.per_layer()..]
    }
}

/// `D^{-1/2}(A + I)D^{-1/2}` with degrees counted after adding the
/// self-connection.
pub fn gcn_operator(g: &Graph) -> SparseOperator {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt()).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.num_arcs() + n);
    let mut coeffs = Vec::with_capacity(g.num_arcs() + n);
    offsets.push(0);
    for v in 0..n {
        let mut self_done = false;
        for &u in g.neighbors(v) {
            if !self_done && u > v {
                cols.push(v);
                coeffs.push(inv_sqrt[v] * inv_sqrt[v]);
                self_done = true;
            }
            cols.push(u);
            coeffs.push(inv_sqrt[v] * inv_sqrt[u]);
        }
        if !self_done {
            cols.push(v);
            coeffs.push(inv_sqrt[v] * inv_sqrt[v]);
        }
        offsets.push(cols.len());
    }
    SparseOperator {
        offsets,
        cols,
        coeffs,
        in_rows: n,
    }
}

/// Plain neighbor summation `A`.
pub fn sum_operator(g: &Graph) -> SparseOperator {
    SparseOperator {
        offsets: g.offsets().to_vec(),
        cols: (0..g.num_nodes()).flat_map(|v| g.neighbors(v).iter().copied()).collect(),
        coeffs: vec![1.0; g.num_arcs()],
        in_rows: g.num_nodes(),
    }
}

/// Input features for structure-only graphs: a ones column, optionally with
/// `ln(1 + degree)` as a second column.
pub fn structural_features(g: &Graph, with_degree: bool) -> Matrix {
    let cols = if with_degree { 2 } else { 1 };
    let mut x = Matrix::filled(g.num_nodes(), cols, 1.0);
    if with_degree {
        for v in 0..g.num_nodes() {
            x.set(v, 1, (g.degree(v) as f64).ln_1p());
        }
    }
    x
}

/// Records one message-passing pass over `g` and returns the embedding
/// variable.
pub fn encode(tape: &mut Tape, params: &BoundParams, g: &Graph, x: &Matrix) -> Result<VarId> {
    if x.rows() != g.num_nodes() || x.cols() != params.dims.input {
        return Err(GdgnnError::Shape(format!(
            "features {}x{} for {} nodes and input width {}",
            x.rows(),
            x.cols(),
            g.num_nodes(),
            params.dims.input
        )));
    }
    let op = Arc::new(match params.kind {
        LayerKind::Gcn => gcn_operator(g),
        LayerKind::Gin => sum_operator(g),
    });
    tape.note_gnn_pass();
    let mut h = tape.constant(x.clone());
    for l in 0..params.dims.layers {
        let p = params.layer(l);
        h = match params.kind {
            LayerKind::Gcn => {
                let agg = tape.propagate(h, op.clone())?;
                let z = tape.matmul(agg, p[0])?;
                tape.add_bias(z, p[1])?
            }
            LayerKind::Gin => {
                let agg = tape.gin_combine(h, p[0], op.clone())?;
                let z = tape.matmul(agg, p[1])?;
                let z = tape.add_bias(z, p[2])?;
                let z = tape.relu(z);
                let z = tape.matmul(z, p[3])?;
                tape.add_bias(z, p[4])?
            }
        };
        if l + 1 < params.dims.layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Two-layer perceptron from task representations to logits.
pub fn head(tape: &mut Tape, params: &BoundParams, rep: VarId) -> Result<VarId> {
    let p = params.head();
    let z = tape.matmul(rep, p[0])?;
    let z = tape.add_bias(z, p[1])?;
    let z = tape.relu(z);
    let z = tape.matmul(z, p[2])?;
    tape.add_bias(z, p[3])
}

/// One encoder pass on a fresh record. Returns the embeddings, the record
/// and the embedding variable for a later [`Tape::backward`].
pub fn gnn_forward(g: &Graph, x: &Matrix, params: &ModelParams) -> Result<(EmbeddingMatrix, Tape, VarId)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let h = encode(&mut tape, &bound, g, x)?;
    Ok((tape.value(h).clone(), tape, h))
}

/// Gradients of a scalar objective as one dense tensor per slot.
pub fn backward(tape: &mut Tape, output: VarId, out_grad: Matrix, params: &ModelParams) -> Result<Vec<Matrix>> {
    let grads: Gradients = tape.backward(output, out_grad)?;
    Ok(grads.dense(&params.shapes()))
}

/// Compares reverse-mode gradients of `loss` with central differences
/// (step `1e-5`) and returns the largest relative error. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`. At most `max_coords` coordinates are
/// checked, drawn uniformly when the model is larger.
pub fn finite_difference_check<F>(params: &ModelParams, loss: F, max_coords: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<VarId>,
{
    const STEP: f64 = 1e-5;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = loss(&mut tape, &bound)?;
    let analytic = backward(&mut tape, out, Matrix::scalar(1.0), params)?;

    let eval = |p: &ModelParams| -> Result<f64> {
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let o = loss(&mut t, &b)?;
        Ok(t.value(o).get(0, 0))
    };

    let mut coords: Vec<(usize, usize)> = params
        .tensors
        .iter()
        .enumerate()
        .flat_map(|(s, t)| (0..t.len()).map(move |i| (s, i)))
        .collect();
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(coords.as_mut_slice(), &mut rng);
        coords.truncate(max_coords);
    }

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (slot, idx) in coords {
        let orig = params.tensors[slot].as_slice()[idx];
        probe.tensors[slot].as_mut_slice()[idx] = orig + STEP;
        let up = eval(&probe)?;
        probe.tensors[slot].as_mut_slice()[idx] = orig - STEP;
        let down = eval(&probe)?;
        probe.tensors[slot].as_mut_slice()[idx] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[slot].as_slice()[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
