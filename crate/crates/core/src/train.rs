//! Training and evaluation for link, node and graph targets.
//!
//! Every optimization step runs the encoder once per graph involved, pools
//! the step's targets on top of those embeddings and updates all parameters
//! with Adam.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Task, TrainConfig};
use crate::error::{GdgnnError, Result};
use crate::gnn::{self, BoundParams, ModelDims, ModelParams};
use crate::graph::{Graph, GraphCollection, NodeId};
use crate::metrics::{self, MetricLog, Metrics};
use crate::pooling::{edge_geodesic, node_geodesics, EdgePlan, GraphPlan, NodePlan, PairGeodesic, PoolConfig};
use crate::tape::{sigmoid, Tape, VarId};
use crate::tensor::Matrix;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Matrix> = params.tensors.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Matrix]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.tensors.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.as_mut_slice(), g.as_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Parameters plus optimizer state and run counters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams,
    adam: Adam,
    pub epoch: usize,
    pub steps: usize,
    pub gnn_forwards: usize,
    pub losses: Vec<f64>,
}

impl Trainer {
    pub fn new(params: ModelParams, lr: f64) -> Self {
        let adam = Adam::new(&params, lr);
        Self {
            params,
            adam,
            epoch: 0,
            steps: 0,
            gnn_forwards: 0,
            losses: Vec::new(),
        }
    }

    /// One optimization step on the scalar loss recorded by `build`.
    pub fn step<F>(&mut self, build: F) -> Result<f64>
    where
        F: FnOnce(&mut Tape, &BoundParams) -> Result<VarId>,
    {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let loss_var = build(&mut tape, &bound)?;
        let loss = tape.value(loss_var).get(0, 0);
        self.gnn_forwards += tape.gnn_passes();
        if !loss.is_finite() {
            return Err(GdgnnError::Diverged {
                epoch: self.epoch,
                step: self.steps,
                loss,
            });
        }
        let grads = gnn::backward(&mut tape, loss_var, Matrix::scalar(1.0), &self.params)?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(GdgnnError::Diverged {
                epoch: self.epoch,
                step: self.steps,
                loss,
            });
        }
        self.adam.step(&mut self.params, &grads);
        self.steps += 1;
        self.losses.push(loss);
        Ok(loss)
    }
}

/// Node features of `g`, or the structural fallback when it has none.
pub fn input_features(g: &Graph, degree_feature: bool) -> Matrix {
    match g.features() {
        Some(x) => x.clone(),
        None => gnn::structural_features(g, degree_feature),
    }
}

/// Logits for edge targets: encoder, pooling plan, head.
pub fn link_logits(tape: &mut Tape, bound: &BoundParams, g: &Graph, x: &Matrix, plan: &EdgePlan) -> Result<VarId> {
    let h = gnn::encode(tape, bound, g, x)?;
    let z = plan.record(tape, h)?;
    gnn::head(tape, bound, z)
}

pub fn node_logits(tape: &mut Tape, bound: &BoundParams, g: &Graph, x: &Matrix, plan: &NodePlan) -> Result<VarId> {
    let h = gnn::encode(tape, bound, g, x)?;
    let z = plan.record(tape, h)?;
    gnn::head(tape, bound, z)
}

/// One encoder pass per graph, graph representations stacked row-wise.
pub fn graph_logits(
    tape: &mut Tape,
    bound: &BoundParams,
    graphs: &[(&Graph, &Matrix, &GraphPlan)],
) -> Result<VarId> {
    let mut rows = Vec::with_capacity(graphs.len());
    for (g, x, plan) in graphs {
        let h = gnn::encode(tape, bound, g, x)?;
        rows.push(plan.record(tape, h)?);
    }
    let z = tape.stack_rows(&rows)?;
    gnn::head(tape, bound, z)
}

pub fn score_links(params: &ModelParams, g: &Graph, x: &Matrix, plan: &EdgePlan) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let z = link_logits(&mut tape, &bound, g, x, plan)?;
    Ok(tape.value(z).as_slice().iter().map(|&l| sigmoid(l)).collect())
}

// ---------------------------------------------------------------- links

#[derive(Debug, Clone)]
pub struct LinkSplit {
    /// The message-passing graph: valid and test edges removed.
    pub train_graph: Graph,
    pub train: Vec<(NodeId, NodeId)>,
    pub valid: Vec<(NodeId, NodeId)>,
    pub test: Vec<(NodeId, NodeId)>,
}

/// Shuffles the undirected edges and cuts them by `ratios`
/// (train / valid / test, rounded to the nearest edge).
pub fn split_links(g: &Graph, ratios: [f64; 3], seed: u64) -> Result<LinkSplit> {
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| r < 0.0) {
        return Err(GdgnnError::InvalidParameter("link split ratios must be nonnegative and sum to 1".into()));
    }
    let mut edges = g.edges();
    let m = edges.len();
    let n_valid = (m as f64 * ratios[1]).round() as usize;
    let n_test = (m as f64 * ratios[2]).round() as usize;
    if n_valid + n_test >= m || (ratios[1] > 0.0 && n_valid == 0) || (ratios[2] > 0.0 && n_test == 0) {
        return Err(GdgnnError::Infeasible(format!("{m} edges are too few for split {ratios:?}")));
    }
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = edges[..n_test].to_vec();
    let valid = edges[n_test..n_test + n_valid].to_vec();
    let mut train = edges[n_test + n_valid..].to_vec();
    train.sort_unstable();
    let mut held: Vec<(NodeId, NodeId)> = test.clone();
    held.extend(&valid);
    let mut train_graph = g.without_edges(&held)?;
    if let Some(x) = g.features() {
        train_graph = train_graph.with_features(x.clone())?;
    }
    Ok(LinkSplit {
        train_graph,
        train,
        valid,
        test,
    })
}

/// `ratio * positives.len()` distinct non-edges of `g`, each made by
/// replacing one endpoint of a positive with a random node. Falls back to
/// enumerating all non-edges when random corruption keeps colliding.
pub fn sample_negatives(
    g: &Graph,
    positives: &[(NodeId, NodeId)],
    ratio: usize,
    seed: u64,
) -> Result<Vec<(NodeId, NodeId)>> {
    let n = g.num_nodes();
    let want = positives.len() * ratio;
    if want == 0 {
        return Ok(Vec::new());
    }
    if positives.is_empty() || n < 2 {
        return Err(GdgnnError::Infeasible("no positives to corrupt".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = |a: NodeId, b: NodeId| (a.min(b), a.max(b));
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    let mut failures = 0usize;
    let mut i = 0usize;
    while out.len() < want && failures < 50 * want.max(16) {
        let (u, v) = positives[i % positives.len()];
        i += 1;
        let w = rng.gen_range(0..n);
        let (a, b) = if rng.gen::<bool>() { (u, w) } else { (w, v) };
        if a == b || g.has_edge(a, b) || !seen.insert(key(a, b)) {
            failures += 1;
            continue;
        }
        out.push((a, b));
    }
    if out.len() < want {
        let mut rest: Vec<(NodeId, NodeId)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !g.has_edge(a, b) && !seen.contains(&(a, b)))
            .collect();
        if out.len() + rest.len() < want {
            return Err(GdgnnError::Infeasible(format!(
                "only {} non-edges available, {want} negatives requested",
                out.len() + rest.len()
            )));
        }
        rest.shuffle(&mut rng);
        out.extend(rest.into_iter().take(want - out.len()));
    }
    Ok(out)
}

pub fn evaluate_links(
    params: &ModelParams,
    g: &Graph,
    x: &Matrix,
    pos: &EdgePlan,
    neg: &EdgePlan,
    hits_k: usize,
) -> Result<Metrics> {
    if pos.is_empty() || neg.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    let ps = score_links(params, g, x, pos)?;
    let ns = score_links(params, g, x, neg)?;
    Ok(Metrics {
        loss: None,
        auc: Some(metrics::auc(&ps, &ns)?),
        ap: Some(metrics::average_precision(&ps, &ns)?),
        hits: Some((hits_k, metrics::hits_at_k(&ps, &ns, hits_k)?)),
        accuracy: None,
    })
}

/// Result of a training run. `params` are the ones with the best
/// validation score; `test` is measured with them.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub valid: Metrics,
    pub test: Metrics,
    pub best_epoch: usize,
    pub log: MetricLog,
    pub losses: Vec<f64>,
    pub steps: usize,
    pub gnn_forwards: usize,
}

fn link_pool(cfg: &TrainConfig) -> PoolConfig {
    PoolConfig {
        mask_target: true,
        ..cfg.pool_config()
    }
}

fn extract_edges(g: &Graph, pairs: &[(NodeId, NodeId)], pool: &PoolConfig) -> Vec<PairGeodesic> {
    pairs.par_iter().map(|&(u, v)| edge_geodesic(g, u, v, pool)).collect()
}

/// Link prediction: split, train on the message-passing graph with fresh
/// negatives every epoch, select on validation AUC, report test metrics.
pub fn train_link(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = split_links(g, cfg.split, cfg.seed)?;
    train_link_on_split(g, &split, cfg)
}

pub fn train_link_on_split(full: &Graph, split: &LinkSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = link_pool(cfg);
    let mp = &split.train_graph;
    let x = input_features(mp, cfg.degree_feature);
    let dims = ModelDims {
        input: x.cols(),
        hidden: cfg.hidden,
        layers: cfg.layers,
        head_input: pool.edge_width(cfg.hidden),
        head_hidden: cfg.head_hidden,
        outputs: 1,
    };
    let mut trainer = Trainer::new(ModelParams::init(cfg.layer, dims, cfg.seed)?, cfg.lr);

    let valid_neg = sample_negatives(full, &split.valid, 1, cfg.seed ^ 0x5EED_0001)?;
    let test_neg = sample_negatives(full, &split.test, 1, cfg.seed ^ 0x5EED_0002)?;
    let plan = |pairs: &[(NodeId, NodeId)]| EdgePlan::from_geodesics(&extract_edges(mp, pairs, &pool), pairs, &pool);
    let (valid_pos_plan, valid_neg_plan) = (plan(&split.valid), plan(&valid_neg));
    let pos_geos = extract_edges(mp, &split.train, &pool);

    let mut log = MetricLog::default();
    let mut best: Option<(f64, usize, ModelParams, Metrics)> = None;
    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        let negs = sample_negatives(full, &split.train, cfg.neg_ratio, cfg.seed.wrapping_add(1 + epoch as u64))?;
        let neg_geos = extract_edges(mp, &negs, &pool);
        let mut order: Vec<(usize, bool)> = (0..split.train.len())
            .map(|i| (i, true))
            .chain((0..negs.len()).map(|i| (i, false)))
            .collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9)));
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut pairs = Vec::with_capacity(chunk.len());
            let mut geos = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &(i, positive) in chunk {
                if positive {
                    pairs.push(split.train[i]);
                    geos.push(pos_geos[i].clone());
                } else {
                    pairs.push(negs[i]);
                    geos.push(neg_geos[i].clone());
                }
                labels.push(if positive { 1.0 } else { 0.0 });
            }
            let batch_plan = EdgePlan::from_geodesics(&geos, &pairs, &pool);
            epoch_loss += trainer.step(|tape, bound| {
                let z = link_logits(tape, bound, mp, &x, &batch_plan)?;
                tape.bce_with_logits(z, &labels)
            })?;
            batches += 1;
        }
        log.push(
            epoch,
            "train",
            &Metrics {
                loss: Some(epoch_loss / batches as f64),
                ..Default::default()
            },
        );
        let last = epoch + 1 == cfg.epochs;
        if last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            let m = evaluate_links(&trainer.params, mp, &x, &valid_pos_plan, &valid_neg_plan, cfg.hits_k)?;
            log.push(epoch, "valid", &m);
            let score = m.auc.unwrap_or(0.0);
            if best.as_ref().map_or(true, |b| score > b.0) {
                best = Some((score, epoch, trainer.params.clone(), m));
            }
        }
    }
    let (_, best_epoch, params, valid) = best.expect("at least one evaluation");
    let test = evaluate_links(&params, mp, &x, &plan(&split.test), &plan(&test_neg), cfg.hits_k)?;
    log.push(best_epoch, "test", &test);
    Ok(TrainOutcome {
        params,
        valid,
        test,
        best_epoch,
        log,
        losses: trainer.losses,
        steps: trainer.steps,
        gnn_forwards: trainer.gnn_forwards,
    })
}

// ---------------------------------------------------------------- nodes

/// Random train / valid / test partition of `0..n`.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (n as f64 * ratios[1]).round() as usize;
    let n_test = (n as f64 * ratios[2]).round() as usize;
    let test = idx[..n_test.min(n)].to_vec();
    let valid = idx[n_test.min(n)..(n_test + n_valid).min(n)].to_vec();
    let train = idx[(n_test + n_valid).min(n)..].to_vec();
    (train, valid, test)
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

fn classification_metrics(logits: &Matrix, labels: &[usize]) -> Result<Metrics> {
    let pred = metrics::argmax_rows(logits);
    Ok(Metrics {
        accuracy: Some(metrics::accuracy(&pred, labels)?),
        ..Default::default()
    })
}

pub fn evaluate_nodes(params: &ModelParams, g: &Graph, x: &Matrix, plan: &NodePlan, labels: &[usize]) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let z = node_logits(&mut tape, &bound, g, x, plan)?;
    let loss = tape.softmax_xent(z, labels)?;
    let mut m = classification_metrics(tape.value(z), labels)?;
    m.loss = Some(tape.value(loss).get(0, 0));
    Ok(m)
}

/// Node classification on a single graph with one label per node.
pub fn train_node(g: &Graph, labels: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.len() != g.num_nodes() {
        return Err(GdgnnError::Shape(format!("{} labels for {} nodes", labels.len(), g.num_nodes())));
    }
    let pool = cfg.pool_config();
    let x = input_features(g, cfg.degree_feature);
    let classes = class_count(labels);
    let dims = ModelDims {
        input: x.cols(),
        hidden: cfg.hidden,
        layers: cfg.layers,
        head_input: pool.node_width(cfg.hidden),
        head_hidden: cfg.head_hidden,
        outputs: classes.max(2),
    };
    let (train, valid, test) = split_indices(g.num_nodes(), cfg.split, cfg.seed);
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(GdgnnError::Infeasible("node split leaves an empty part".into()));
    }
    let per_node: Vec<Vec<PairGeodesic>> = (0..g.num_nodes())
        .into_par_iter()
        .map(|v| node_geodesics(g, v, &pool))
        .collect::<Result<_>>()?;
    let plan_for = |nodes: &[usize]| {
        let refs: Vec<&[PairGeodesic]> = nodes.iter().map(|&v| per_node[v].as_slice()).collect();
        NodePlan::from_geodesics(&refs, nodes, &pool)
    };
    let pick = |nodes: &[usize]| nodes.iter().map(|&v| labels[v]).collect::<Vec<_>>();
    let (valid_plan, valid_labels) = (plan_for(&valid), pick(&valid));

    let mut trainer = Trainer::new(ModelParams::init(cfg.layer, dims, cfg.seed)?, cfg.lr);
    let mut log = MetricLog::default();
    let mut best: Option<(f64, usize, ModelParams, Metrics)> = None;
    let mut order = train.clone();
    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9)));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let plan = plan_for(chunk);
            let y = pick(chunk);
            total += trainer.step(|tape, bound| {
                let z = node_logits(tape, bound, g, &x, &plan)?;
                tape.softmax_xent(z, &y)
            })?;
            batches += 1;
        }
        log.push(
            epoch,
            "train",
            &Metrics {
                loss: Some(total / batches as f64),
                ..Default::default()
            },
        );
        let last = epoch + 1 == cfg.epochs;
        if last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            let m = evaluate_nodes(&trainer.params, g, &x, &valid_plan, &valid_labels)?;
            log.push(epoch, "valid", &m);
            let score = m.accuracy.unwrap_or(0.0);
            if best.as_ref().map_or(true, |b| score > b.0) {
                best = Some((score, epoch, trainer.params.clone(), m));
            }
        }
    }
    let (_, best_epoch, params, valid) = best.expect("at least one evaluation");
    let test = evaluate_nodes(&params, g, &x, &plan_for(&test), &pick(&test))?;
    log.push(best_epoch, "test", &test);
    Ok(TrainOutcome {
        params,
        valid,
        test,
        best_epoch,
        log,
        losses: trainer.losses,
        steps: trainer.steps,
        gnn_forwards: trainer.gnn_forwards,
    })
}

// ---------------------------------------------------------------- graphs

/// Graph inputs with their pooling plans, built once per collection.
pub struct PreparedGraphs {
    pub features: Vec<Matrix>,
    pub plans: Vec<GraphPlan>,
    pub labels: Vec<usize>,
}

pub fn prepare_graphs(c: &GraphCollection, pool: &PoolConfig, degree_feature: bool) -> Result<PreparedGraphs> {
    let labels = c
        .labels
        .as_ref()
        .ok_or_else(|| GdgnnError::InvalidParameter("graph classification needs labels".into()))?
        .iter()
        .map(|l| match l.class() {
            Some(c) if c >= 0 => Ok(c as usize),
            _ => Err(GdgnnError::InvalidParameter(format!("label {l:?} is not a class id"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let plans = c
        .graphs
        .par_iter()
        .map(|g| GraphPlan::new_sequential(g, pool))
        .collect::<Result<Vec<_>>>()?;
    let features = c.graphs.iter().map(|g| input_features(g, degree_feature)).collect();
    Ok(PreparedGraphs { features, plans, labels })
}

pub fn evaluate_graphs(params: &ModelParams, c: &GraphCollection, prep: &PreparedGraphs, idx: &[usize]) -> Result<Metrics> {
    if idx.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let batch: Vec<(&Graph, &Matrix, &GraphPlan)> =
        idx.iter().map(|&i| (&c.graphs[i], &prep.features[i], &prep.plans[i])).collect();
    let z = graph_logits(&mut tape, &bound, &batch)?;
    let y: Vec<usize> = idx.iter().map(|&i| prep.labels[i]).collect();
    let loss = tape.softmax_xent(z, &y)?;
    let mut m = classification_metrics(tape.value(z), &y)?;
    m.loss = Some(tape.value(loss).get(0, 0));
    Ok(m)
}

/// Graph classification; batches are whole graphs.
pub fn train_graph(c: &GraphCollection, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = cfg.pool_config();
    let prep = prepare_graphs(c, &pool, cfg.degree_feature)?;
    let (train, valid, test) = split_indices(c.len(), cfg.split, cfg.seed);
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(GdgnnError::Infeasible("graph split leaves an empty part".into()));
    }
    train_graph_on(c, &prep, &train, &valid, &test, cfg)
}

pub fn train_graph_on(
    c: &GraphCollection,
    prep: &PreparedGraphs,
    train: &[usize],
    valid: &[usize],
    test: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let pool = cfg.pool_config();
    let input = prep.features.first().map_or(1, Matrix::cols);
    let dims = ModelDims {
        input,
        hidden: cfg.hidden,
        layers: cfg.layers,
        head_input: pool.graph_width(cfg.hidden),
        head_hidden: cfg.head_hidden,
        outputs: class_count(&prep.labels).max(2),
    };
    let mut trainer = Trainer::new(ModelParams::init(cfg.layer, dims, cfg.seed)?, cfg.lr);
    let mut log = MetricLog::default();
    let mut best: Option<(f64, usize, ModelParams, Metrics)> = None;
    let mut order = train.to_vec();
    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9)));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Graph, &Matrix, &GraphPlan)> =
                chunk.iter().map(|&i| (&c.graphs[i], &prep.features[i], &prep.plans[i])).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| prep.labels[i]).collect();
            total += trainer.step(|tape, bound| {
                let z = graph_logits(tape, bound, &batch)?;
                tape.softmax_xent(z, &y)
            })?;
            batches += 1;
        }
        let train_m = Metrics {
            loss: Some(total / batches as f64),
            ..Default::default()
        };
        log.push(epoch, "train", &train_m);
        let last = epoch + 1 == cfg.epochs;
        if last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            let m = evaluate_graphs(&trainer.params, c, prep, valid)?;
            log.push(epoch, "valid", &m);
            let score = m.accuracy.unwrap_or(0.0);
            if best.as_ref().map_or(true, |b| score > b.0) {
                best = Some((score, epoch, trainer.params.clone(), m));
            }
        }
    }
    let (_, best_epoch, params, valid_m) = best.expect("at least one evaluation");
    let test_m = evaluate_graphs(&params, c, prep, test)?;
    log.push(best_epoch, "test", &test_m);
    Ok(TrainOutcome {
        params,
        valid: valid_m,
        test: test_m,
        best_epoch,
        log,
        losses: trainer.losses,
        steps: trainer.steps,
        gnn_forwards: trainer.gnn_forwards,
    })
}

/// Data for [`train`].
pub enum TrainData<'a> {
    Links(&'a Graph),
    Nodes(&'a Graph, &'a [usize]),
    Graphs(&'a GraphCollection),
}

/// Dispatches on `cfg.task`.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    match (cfg.task, data) {
        (Task::Link, TrainData::Links(g)) => train_link(g, cfg),
        (Task::Node, TrainData::Nodes(g, y)) => train_node(g, y, cfg),
        (Task::Graph, TrainData::Graphs(c)) => train_graph(c, cfg),
        (task, _) => Err(GdgnnError::InvalidParameter(format!("data does not match task '{task}'"))),
    }
}

/// Recomputes the test metrics of trained `params`, rebuilding the same
/// split and evaluation negatives that [`train`] used for `cfg`.
pub fn evaluate_test(data: TrainData<'_>, cfg: &TrainConfig, params: &ModelParams) -> Result<Metrics> {
    cfg.validate()?;
    match (cfg.task, data) {
        (Task::Link, TrainData::Links(g)) => {
            let split = split_links(g, cfg.split, cfg.seed)?;
            let pool = link_pool(cfg);
            let mp = &split.train_graph;
            let x = input_features(mp, cfg.degree_feature);
            let test_neg = sample_negatives(g, &split.test, 1, cfg.seed ^ 0x5EED_0002)?;
            let plan = |pairs: &[(NodeId, NodeId)]| EdgePlan::from_geodesics(&extract_edges(mp, pairs, &pool), pairs, &pool);
            evaluate_links(params, mp, &x, &plan(&split.test), &plan(&test_neg), cfg.hits_k)
        }
        (Task::Node, TrainData::Nodes(g, labels)) => {
            let (_, _, test) = split_indices(g.num_nodes(), cfg.split, cfg.seed);
            let x = input_features(g, cfg.degree_feature);
            let plan = NodePlan::new(g, &test, &cfg.pool_config())?;
            let y: Vec<usize> = test.iter().map(|&v| labels[v]).collect();
            evaluate_nodes(params, g, &x, &plan, &y)
        }
        (Task::Graph, TrainData::Graphs(c)) => {
            let prep = prepare_graphs(c, &cfg.pool_config(), cfg.degree_feature)?;
            let (_, _, test) = split_indices(c.len(), cfg.split, cfg.seed);
            evaluate_graphs(params, c, &prep, &test)
        }
        (task, _) => Err(GdgnnError::InvalidParameter(format!("data does not match task '{task}'"))),
    }
}
