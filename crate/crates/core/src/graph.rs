//! Immutable compressed adjacency storage.
//!
//! A [`Graph`] keeps one sorted, duplicate-free neighbor slice per node.
//! Undirected graphs store both directions of every edge. Edge labels are
//! carried along for loaders but no computation in this crate reads them.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{GdgnnError, Result};
use crate::tensor::Matrix;

pub type NodeId = usize;

/// An input edge, optionally labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: Option<i64>,
}

impl From<(NodeId, NodeId)> for Edge {
    fn from((src, dst): (NodeId, NodeId)) -> Self {
        Edge {
            src,
            dst,
            label: None,
        }
    }
}

impl From<(NodeId, NodeId, i64)> for Edge {
    fn from((src, dst, label): (NodeId, NodeId, i64)) -> Self {
        Edge {
            src,
            dst,
            label: Some(label),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    undirected: bool,
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    edge_labels: Option<Vec<i64>>,
    features: Option<Matrix>,
}

impl Graph {
    /// Builds a canonical graph: self-loops dropped, duplicates merged (first
    /// label wins), neighbor slices sorted, and both directions stored when
    /// `undirected` is set.
    pub fn build<E: Into<Edge>>(
        num_nodes: usize,
        edges: impl IntoIterator<Item = E>,
        undirected: bool,
    ) -> Result<Graph> {
        if num_nodes == 0 {
            return Err(GdgnnError::EmptyGraph);
        }
        let mut arcs: Vec<(NodeId, NodeId, Option<i64>)> = Vec::new();
        let mut any_label = false;
        for e in edges {
            let e: Edge = e.into();
            for node in [e.src, e.dst] {
                if node >= num_nodes {
                    return Err(GdgnnError::NodeOutOfRange { node, num_nodes });
                }
            }
            if e.src == e.dst {
                continue;
            }
            any_label |= e.label.is_some();
            arcs.push((e.src, e.dst, e.label));
            if undirected {
                arcs.push((e.dst, e.src, e.label));
            }
        }
        // stable sort keeps the first occurrence of a duplicate in front
        arcs.sort_by_key(|&(s, d, _)| (s, d));
        arcs.dedup_by_key(|&mut (s, d, _)| (s, d));

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(s, _, _) in &arcs {
            offsets[s + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = arcs.iter().map(|&(_, d, _)| d).collect();
        let edge_labels = any_label.then(|| arcs.iter().map(|&(_, _, l)| l.unwrap_or(0)).collect());
        Ok(Graph {
            num_nodes,
            undirected,
            offsets,
            neighbors,
            edge_labels,
            features: None,
        })
    }

    /// Attaches a node feature matrix (one row per node).
    pub fn with_features(mut self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(GdgnnError::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    /// Number of stored arcs (twice the edge count for undirected graphs).
    #[inline]
    pub fn num_arcs(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        if self.undirected {
            self.neighbors.len() / 2
        } else {
            self.neighbors.len()
        }
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn edge_labels(&self, v: NodeId) -> Option<&[i64]> {
        self.edge_labels
            .as_ref()
            .map(|l| &l[self.offsets[v]..self.offsets[v + 1]])
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once as `(min, max)`, in ascending order. For a
    /// directed graph every arc is returned.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if !self.undirected || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Returns the graph with node `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[NodeId]) -> Result<Graph> {
        if perm.len() != self.num_nodes {
            return Err(GdgnnError::Shape(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.num_nodes
            )));
        }
        let edges = self.edges().into_iter().map(|(u, v)| (perm[u], perm[v]));
        let mut g = Graph::build(self.num_nodes, edges, self.undirected)?;
        if let Some(x) = &self.features {
            let mut y = Matrix::zeros(x.rows(), x.cols());
            for v in 0..self.num_nodes {
                y.row_mut(perm[v]).copy_from_slice(x.row(v));
            }
            g.features = Some(y);
        }
        Ok(g)
    }

    /// The graph with a set of undirected edges removed.
    pub fn without_edges(&self, removed: &[(NodeId, NodeId)]) -> Result<Graph> {
        let mut drop: std::collections::HashSet<(NodeId, NodeId)> = removed.iter().copied().collect();
        if self.undirected {
            drop.extend(removed.iter().map(|&(u, v)| (v, u)));
        }
        let mut edges = Vec::with_capacity(self.num_arcs());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if !drop.contains(&(u, v)) {
                    edges.push((u, v));
                }
            }
        }
        let mut g = Graph::build(self.num_nodes, edges, self.undirected)?;
        g.features = self.features.clone();
        Ok(g)
    }

    /// Disjoint union: nodes of `other` are shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Graph> {
        let shift = self.num_nodes;
        let edges = self
            .edges()
            .into_iter()
            .chain(other.edges().into_iter().map(|(u, v)| (u + shift, v + shift)));
        Graph::build(self.num_nodes + other.num_nodes, edges, self.undirected)
    }

    /// All nodes `w != v` within `k` hops of `v`, ascending.
    pub fn k_hop_neighborhood(&self, v: NodeId, k: usize) -> Vec<NodeId> {
        let mut dist = vec![usize::MAX; self.num_nodes];
        dist[v] = 0;
        let mut queue = VecDeque::from([v]);
        let mut out = Vec::new();
        while let Some(x) = queue.pop_front() {
            if dist[x] == k {
                continue;
            }
            for &y in self.neighbors(x) {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    out.push(y);
                    queue.push_back(y);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Degree of each node of `nodes` inside the subgraph they induce.
    pub fn induced_degrees(&self, nodes: &[NodeId]) -> BTreeMap<NodeId, usize> {
        induced_degrees_skipping(self, nodes, None)
    }
}

/// Induced degrees ignoring one (undirected) pair, used when the target pair
/// of a link query must not count as an observed edge.
pub(crate) fn induced_degrees_skipping(
    g: &Graph,
    nodes: &[NodeId],
    skip: Option<(NodeId, NodeId)>,
) -> BTreeMap<NodeId, usize> {
    let mut members: Vec<NodeId> = nodes.to_vec();
    members.sort_unstable();
    members.dedup();
    let skipped = |a: NodeId, b: NodeId| match skip {
        Some((x, y)) => (a == x && b == y) || (a == y && b == x),
        None => false,
    };
    members
        .iter()
        .map(|&w| {
            let deg = if g.degree(w) < members.len() {
                g.neighbors(w)
                    .iter()
                    .filter(|&&y| members.binary_search(&y).is_ok() && !skipped(w, y))
                    .count()
            } else {
                members
                    .iter()
                    .filter(|&&y| g.has_edge(w, y) && !skipped(w, y))
                    .count()
            };
            (w, deg)
        })
        .collect()
}

/// A list of graphs with optional per-graph labels.
#[derive(Debug, Clone)]
pub struct GraphCollection {
    pub graphs: Vec<Graph>,
    pub labels: Option<Vec<GraphLabel>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphLabel {
    Class(i64),
    Multi(Vec<i64>),
}

impl GraphLabel {
    /// The single class id, or the first entry of a multi-label vector.
    pub fn class(&self) -> Option<i64> {
        match self {
            GraphLabel::Class(c) => Some(*c),
            GraphLabel::Multi(v) => v.first().copied(),
        }
    }
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>, labels: Option<Vec<GraphLabel>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != graphs.len() {
                return Err(GdgnnError::Shape(format!(
                    "{} labels for {} graphs",
                    l.len(),
                    graphs.len()
                )));
            }
        }
        Ok(Self { graphs, labels })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}
