//! Amortized link scoring versus a per-query subgraph baseline.
//!
//! The geodesic method runs the encoder once on the whole graph and pools
//! every query on top of the shared embeddings. The baseline extracts a
//! labeled subgraph around each query and runs the encoder on it, once per
//! query. [`RunLedger`] counts both.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GdgnnError, Result};
use crate::gnn::{self, LayerKind, ModelDims, ModelParams};
use crate::graph::{Graph, NodeId};
use crate::pooling::{edge_geodesic, EdgePlan, PoolConfig};
use crate::tape::{sigmoid, Reducer, Segments, Tape};
use crate::tensor::Matrix;

/// Counters and per-phase wall-clock of one scoring run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunLedger {
    pub gnn_forward_count: usize,
    pub geodesic_extraction_count: usize,
    /// `(phase, seconds)` in the order the phases first ran.
    pub phases: Vec<(String, f64)>,
}

impl RunLedger {
    pub fn add_time(&mut self, phase: &str, seconds: f64) {
        match self.phases.iter_mut().find(|(p, _)| p == phase) {
            Some((_, s)) => *s += seconds,
            None => self.phases.push((phase.to_string(), seconds)),
        }
    }

    /// Runs `f` and charges its wall-clock to `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.add_time(phase, t.elapsed().as_secs_f64());
        out
    }

    pub fn seconds(&self, phase: &str) -> f64 {
        self.phases.iter().filter(|(p, _)| p == phase).map(|(_, s)| s).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.phases.iter().map(|(_, s)| s).sum()
    }
}

/// Settings for the subgraph baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineConfig {
    /// Hop radius around each endpoint.
    pub radius: u32,
}

impl BaselineConfig {
    pub fn new(radius: u32) -> Result<Self> {
        if radius == 0 {
            return Err(GdgnnError::InvalidParameter("baseline radius must be at least 1".into()));
        }
        Ok(Self { radius })
    }

    /// Width of the one-hot distance-pair label; distances run over
    /// `0..=radius` plus one bucket for "farther".
    pub fn label_width(&self) -> usize {
        let b = self.radius as usize + 2;
        b * b
    }
}

/// A query subgraph with per-node distance-pair labels.
#[derive(Debug, Clone)]
pub struct LabeledSubgraph {
    pub graph: Graph,
    /// `nodes[i]` is the original id of subgraph node `i`; the endpoints are
    /// nodes 0 and 1.
    pub nodes: Vec<NodeId>,
    /// `(d(w, u), d(w, v))`, `None` where beyond the radius.
    pub labels: Vec<(Option<u32>, Option<u32>)>,
}

impl LabeledSubgraph {
    /// One-hot label rows.
    pub fn label_matrix(&self, radius: u32) -> Matrix {
        let b = radius as usize + 2;
        let bucket = |d: Option<u32>| d.map_or(b - 1, |d| d as usize);
        let mut m = Matrix::zeros(self.labels.len(), b * b);
        for (i, &(a, c)) in self.labels.iter().enumerate() {
            m.set(i, bucket(a) * b + bucket(c), 1.0);
        }
        m
    }
}

/// Distances within `radius` hops of `s`, never crossing the pair `skip`.
fn local_bfs(g: &Graph, s: NodeId, radius: u32, skip: (NodeId, NodeId)) -> HashMap<NodeId, u32> {
    let mut dist = HashMap::from([(s, 0u32)]);
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[&x];
        if dx == radius {
            continue;
        }
        for &y in g.neighbors(x) {
            if (x == skip.0 && y == skip.1) || (x == skip.1 && y == skip.0) {
                continue;
            }
            dist.entry(y).or_insert_with(|| {
                queue.push_back(y);
                dx + 1
            });
        }
    }
    dist
}

/// Union of the `radius`-hop neighborhoods of `u` and `v` with the pair
/// `(u, v)` removed, each node labeled by its distances to both endpoints
/// in that reduced graph. The endpoints themselves are labeled `(0, 1)` and
/// `(1, 0)` whether or not they are adjacent.
pub fn drnl_like_label(g: &Graph, u: NodeId, v: NodeId, radius: u32) -> Result<LabeledSubgraph> {
    let n = g.num_nodes();
    for w in [u, v] {
        if w >= n {
            return Err(GdgnnError::NodeOutOfRange { node: w, num_nodes: n });
        }
    }
    if u == v {
        return Err(GdgnnError::InvalidParameter("query endpoints must differ".into()));
    }
    BaselineConfig::new(radius)?;
    let du = local_bfs(g, u, radius, (u, v));
    let dv = local_bfs(g, v, radius, (u, v));
    let mut rest: Vec<NodeId> = du.keys().chain(dv.keys()).copied().filter(|&w| w != u && w != v).collect();
    rest.sort_unstable();
    rest.dedup();
    let mut nodes = vec![u, v];
    nodes.extend(rest);
    let local: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut edges = Vec::new();
    for (i, &w) in nodes.iter().enumerate() {
        for &x in g.neighbors(w) {
            if let Some(&j) = local.get(&x) {
                if i < j && !(i == 0 && j == 1) {
                    edges.push((i, j));
                }
            }
        }
    }
    let labels = nodes
        .iter()
        .enumerate()
        .map(|(i, w)| match i {
            0 => (Some(0), Some(1)),
            1 => (Some(1), Some(0)),
            _ => (du.get(w).copied(), dv.get(w).copied()),
        })
        .collect();
    Ok(LabeledSubgraph {
        graph: Graph::build(nodes.len(), edges, true)?,
        nodes,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gdgnn,
    SubgraphBaseline,
}

impl std::str::FromStr for Method {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gdgnn" => Ok(Method::Gdgnn),
            "subgraph-baseline" | "baseline" => Ok(Method::SubgraphBaseline),
            _ => Err(GdgnnError::InvalidParameter(format!("unknown method '{s}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Gdgnn => "gdgnn",
            Method::SubgraphBaseline => "subgraph-baseline",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub layer: LayerKind,
    pub layers: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub pool: PoolConfig,
    pub baseline: BaselineConfig,
    pub seed: u64,
}

impl BenchConfig {
    /// Both methods see the same depth and receptive radius.
    pub fn new(pool: PoolConfig, layers: usize, hidden: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            layer: LayerKind::Gcn,
            layers,
            hidden,
            head_hidden: hidden,
            baseline: BaselineConfig::new(pool.d_max.max(1))?,
            pool,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub method: Method,
    pub scores: Vec<f64>,
    pub ledger: RunLedger,
}

/// Scores every query with freshly initialized parameters. Extraction is
/// sequential so both methods are timed on one thread.
pub fn run_benchmark(g: &Graph, queries: &[(NodeId, NodeId)], method: Method, cfg: &BenchConfig) -> Result<BenchResult> {
    if queries.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    for &(u, v) in queries {
        for w in [u, v] {
            if w >= g.num_nodes() {
                return Err(GdgnnError::NodeOutOfRange {
                    node: w,
                    num_nodes: g.num_nodes(),
                });
            }
        }
    }
    cfg.pool.validate()?;
    let mut ledger = RunLedger::default();
    let scores = match method {
        Method::Gdgnn => run_gdgnn(g, queries, cfg, &mut ledger)?,
        Method::SubgraphBaseline => run_baseline(g, queries, cfg, &mut ledger)?,
    };
    Ok(BenchResult { method, scores, ledger })
}

fn run_gdgnn(g: &Graph, queries: &[(NodeId, NodeId)], cfg: &BenchConfig, ledger: &mut RunLedger) -> Result<Vec<f64>> {
    let x = gnn::structural_features(g, true);
    let dims = ModelDims {
        input: x.cols(),
        hidden: cfg.hidden,
        layers: cfg.layers,
        head_input: cfg.pool.edge_width(cfg.hidden),
        head_hidden: cfg.head_hidden,
        outputs: 1,
    };
    let params = ModelParams::init(cfg.layer, dims, cfg.seed)?;
    let geos = ledger.timed("geodesic", || {
        queries.iter().map(|&(u, v)| edge_geodesic(g, u, v, &cfg.pool)).collect::<Vec<_>>()
    });
    ledger.geodesic_extraction_count += geos.len();
    let plan = EdgePlan::from_geodesics(&geos, queries, &cfg.pool);
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let h = ledger.timed("gnn", || gnn::encode(&mut tape, &bound, g, &x))?;
    ledger.gnn_forward_count += tape.gnn_passes();
    let logits = ledger.timed("head", || -> Result<_> {
        let z = plan.record(&mut tape, h)?;
        gnn::head(&mut tape, &bound, z)
    })?;
    Ok(tape.value(logits).as_slice().iter().map(|&l| sigmoid(l)).collect())
}

fn run_baseline(g: &Graph, queries: &[(NodeId, NodeId)], cfg: &BenchConfig, ledger: &mut RunLedger) -> Result<Vec<f64>> {
    let radius = cfg.baseline.radius;
    let dims = ModelDims {
        input: cfg.baseline.label_width() + 2,
        hidden: cfg.hidden,
        layers: cfg.layers,
        head_input: 2 * cfg.hidden,
        head_hidden: cfg.head_hidden,
        outputs: 1,
    };
    let params = ModelParams::init(cfg.layer, dims, cfg.seed)?;
    let first = Arc::new(Segments::singletons([0]));
    let second = Arc::new(Segments::singletons([1]));
    let mut scores = Vec::with_capacity(queries.len());
    for &(u, v) in queries {
        let (sub, x) = ledger.timed("subgraph", || -> Result<_> {
            let sub = drnl_like_label(g, u, v, radius)?;
            let labels = sub.label_matrix(radius);
            let mut x = Matrix::zeros(sub.nodes.len(), labels.cols() + 2);
            for (i, &w) in sub.nodes.iter().enumerate() {
                x.row_mut(i)[..labels.cols()].copy_from_slice(labels.row(i));
                x.set(i, labels.cols(), 1.0);
                x.set(i, labels.cols() + 1, (1.0 + g.degree(w) as f64).ln());
            }
            Ok((sub, x))
        })?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let h = ledger.timed("gnn", || gnn::encode(&mut tape, &bound, &sub.graph, &x))?;
        ledger.gnn_forward_count += tape.gnn_passes();
        let logit = ledger.timed("head", || -> Result<_> {
            let hu = tape.segment(h, first.clone(), Reducer::Sum)?;
            let hv = tape.segment(h, second.clone(), Reducer::Sum)?;
            let z = tape.concat(&[hu, hv])?;
            gnn::head(&mut tape, &bound, z)
        })?;
        scores.push(sigmoid(tape.value(logit).get(0, 0)));
    }
    Ok(scores)
}

/// Sparse random graph with `m` distinct edges on `n` nodes.
pub fn random_gnm(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let max = n.saturating_mul(n.saturating_sub(1)) / 2;
    if m > max {
        return Err(GdgnnError::Infeasible(format!("{m} edges do not fit on {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(m);
    while seen.len() < m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            seen.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<_> = seen.into_iter().collect();
    edges.sort_unstable();
    Graph::build(n, edges, true)
}

/// `k` node pairs sharing no endpoint.
pub fn disjoint_queries(n: usize, k: usize, seed: u64) -> Result<Vec<(NodeId, NodeId)>> {
    if 2 * k > n {
        return Err(GdgnnError::Infeasible(format!("{k} disjoint pairs need {} nodes, have {n}", 2 * k)));
    }
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(nodes[..2 * k].chunks(2).map(|c| (c[0], c[1])).collect())
}

/// CSV header for [`csv_row`].
pub const CSV_HEADER: &str = "method,queries,gnn_forwards,geodesic_extractions,seconds_phase,seconds_total";

/// `seconds_phase` is the time spent in the method's query-specific
/// extraction phase (geodesics or subgraphs).
pub fn csv_row(r: &BenchResult) -> String {
    let phase = match r.method {
        Method::Gdgnn => r.ledger.seconds("geodesic"),
        Method::SubgraphBaseline => r.ledger.seconds("subgraph"),
    };
    format!(
        "{},{},{},{},{:.6},{:.6}",
        r.method,
        r.scores.len(),
        r.ledger.gnn_forward_count,
        r.ledger.geodesic_extraction_count,
        phase,
        r.ledger.total_seconds()
    )
}
