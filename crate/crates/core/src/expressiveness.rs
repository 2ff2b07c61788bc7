//! Training-free distinguishing machinery: 1-WL color refinement, layer edge
//! configurations, canonical geodesic signatures and the special graph
//! families used to probe them.
//!
//! Signatures follow the dimension-one argument: every node embedding is
//! the constant one and geodesic pooling is a sum, so a pooled geodesic is
//! just the size of the geodesic node set. Everything here is integer
//! arithmetic and compared exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GdgnnError, Result};
use crate::geodesic::{bfs_distances, vertical_geodesic_one_side};
use crate::graph::{induced_degrees_skipping, Graph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorPartition {
    pub colors: Vec<usize>,
    pub rounds_to_stabilize: usize,
}

impl ColorPartition {
    pub fn num_classes(&self) -> usize {
        self.colors.iter().max().map_or(0, |&m| m + 1)
    }

    /// Class sizes keyed by color.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &c in &self.colors {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }
}

/// 1-WL refinement from a uniform coloring. Each round a node's new color
/// is the rank of `(old color, sorted neighbor colors)` among all such
/// signatures, so color ids do not depend on node numbering.
pub fn wl_refine(g: &Graph, max_rounds: usize) -> ColorPartition {
    let n = g.num_nodes();
    let mut colors = vec![0usize; n];
    let mut classes = 1;
    let mut rounds = 0;
    while rounds < max_rounds.max(1) {
        let sigs: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<usize> = g.neighbors(v).iter().map(|&w| colors[w]).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let mut distinct = sigs.clone();
        distinct.sort();
        distinct.dedup();
        let next: Vec<usize> = sigs
            .iter()
            .map(|s| distinct.binary_search(s).expect("present"))
            .collect();
        rounds += 1;
        let stable = distinct.len() == classes;
        colors = next;
        classes = distinct.len();
        if stable {
            break;
        }
    }
    ColorPartition {
        colors,
        rounds_to_stabilize: rounds,
    }
}

/// Whether 1-WL tells `g1` and `g2` apart: refine the disjoint union and
/// compare the color histograms of the two halves.
pub fn wl_distinguish(g1: &Graph, g2: &Graph, max_rounds: usize) -> Result<bool> {
    let union = g1.disjoint_union(g2)?;
    let p = wl_refine(&union, max_rounds);
    let n1 = g1.num_nodes();
    let hist = |range: std::ops::Range<usize>| {
        let mut h = BTreeMap::new();
        for v in range {
            *h.entry(p.colors[v]).or_insert(0usize) += 1;
        }
        h
    };
    Ok(hist(0..n1) != hist(n1..union.num_nodes()))
}

/// `layers[k][i - 1]` is the number of nodes at distance `k + 1` from the
/// root with exactly `i` edges into distance `k`. Trailing zeros are
/// trimmed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EdgeConfiguration {
    pub layers: Vec<Vec<usize>>,
}

pub fn edge_configurations(g: &Graph, v: NodeId, d_max: u32) -> EdgeConfiguration {
    let dmap = bfs_distances(g, v, d_max);
    let mut layers = vec![Vec::new(); d_max as usize];
    for w in 0..g.num_nodes() {
        let Some(dw) = dmap.finite(w) else { continue };
        if dw == 0 {
            continue;
        }
        let i = g.neighbors(w).iter().filter(|&&x| dmap.get(x) == dw - 1).count();
        let layer: &mut Vec<usize> = &mut layers[dw as usize - 1];
        if layer.len() < i {
            layer.resize(i, 0);
        }
        layer[i - 1] += 1;
    }
    EdgeConfiguration { layers }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignatureVariant {
    /// Sizes of one-sided vertical geodesics.
    Vert,
    /// Sizes plus the degree multiset of the induced geodesic subgraph.
    VertDeg,
    /// Horizontal path lengths, i.e. distance counts only.
    Hor,
}

impl std::str::FromStr for SignatureVariant {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "vert" | "vertical" => Ok(SignatureVariant::Vert),
            "vertdeg" | "verticaldeg" => Ok(SignatureVariant::VertDeg),
            "hor" | "horizontal" => Ok(SignatureVariant::Hor),
            _ => Err(GdgnnError::InvalidParameter(format!("unknown signature variant '{s}'"))),
        }
    }
}

impl std::fmt::Display for SignatureVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignatureVariant::Vert => "vert",
            SignatureVariant::VertDeg => "vertdeg",
            SignatureVariant::Hor => "hor",
        })
    }
}

/// Bin counts of pooled geodesic keys for one distance.
pub type DistanceBins = Vec<(Vec<usize>, usize)>;

/// `bins[k - 1]` holds the bin counts over nodes at distance `k`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeSignature {
    pub bins: Vec<DistanceBins>,
}

/// Sorted multiset of node signatures.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CanonicalSignature {
    pub nodes: Vec<NodeSignature>,
}

/// Distance-sorted bin count over the pair geodesics `(v, s)`, `s` within
/// `d_max` of `v`.
pub fn node_signature(g: &Graph, v: NodeId, d_max: u32, variant: SignatureVariant) -> NodeSignature {
    let dmap = bfs_distances(g, v, d_max);
    let mut per_distance: Vec<BTreeMap<Vec<usize>, usize>> = vec![BTreeMap::new(); d_max as usize];
    for s in 0..g.num_nodes() {
        let Some(ds) = dmap.finite(s) else { continue };
        if ds == 0 {
            continue;
        }
        let key = match variant {
            SignatureVariant::Hor => Vec::new(),
            SignatureVariant::Vert | SignatureVariant::VertDeg => {
                let side = vertical_geodesic_one_side(g, s, &dmap).expect("s is within the cutoff");
                let mut key = vec![side.len()];
                if variant == SignatureVariant::VertDeg {
                    let mut degs: Vec<usize> = induced_degrees_skipping(g, &side, None).into_values().collect();
                    degs.sort_unstable();
                    key.extend(degs);
                }
                key
            }
        };
        *per_distance[ds as usize - 1].entry(key).or_insert(0) += 1;
    }
    NodeSignature {
        bins: per_distance.into_iter().map(|m| m.into_iter().collect()).collect(),
    }
}

pub fn canonical_signature(g: &Graph, d_max: u32, variant: SignatureVariant) -> CanonicalSignature {
    let mut nodes: Vec<NodeSignature> = (0..g.num_nodes()).map(|v| node_signature(g, v, d_max, variant)).collect();
    nodes.sort();
    CanonicalSignature { nodes }
}

pub fn distinguish_pair(g1: &Graph, g2: &Graph, d_max: u32, variant: SignatureVariant) -> bool {
    g1.num_nodes() != g2.num_nodes() || canonical_signature(g1, d_max, variant) != canonical_signature(g2, d_max, variant)
}

/// `ceil((1/2 + ε) ln n / ln(r - 1 - ε))`, the cutoff radius at which random
/// `r`-regular graphs on `n` nodes separate.
pub fn regular_d_max(n: usize, r: usize, eps: f64) -> Result<u32> {
    let base = r as f64 - 1.0 - eps;
    if n < 2 || base <= 1.0 {
        return Err(GdgnnError::InvalidParameter(format!(
            "need n >= 2 and r - 1 - eps > 1 (n = {n}, r = {r}, eps = {eps})"
        )));
    }
    Ok(((0.5 + eps) * (n as f64).ln() / base.ln()).ceil() as u32)
}

/// For each node at distance two from `target`: is its pair of common
/// neighbors with `target` joined by an edge? Returns `(joined, total)` over
/// the distance-two nodes whose geodesic side has exactly two members.
pub fn one_edge_pairs(g: &Graph, target: NodeId) -> (usize, usize) {
    let dmap = bfs_distances(g, target, 2);
    let mut joined = 0;
    let mut total = 0;
    for s in 0..g.num_nodes() {
        if dmap.get(s) != 2 {
            continue;
        }
        let side = vertical_geodesic_one_side(g, s, &dmap).expect("within cutoff");
        if side.len() == 2 {
            total += 1;
            if g.has_edge(side[0], side[1]) {
                joined += 1;
            }
        }
    }
    (joined, total)
}

/// Uniform pairing of `n * r` half-edges, rejecting loops and repeated
/// edges until a simple graph comes out.
pub fn random_regular_graph(n: usize, r: usize, seed: u64) -> Result<Graph> {
    if n == 0 || r >= n || (n * r) % 2 == 1 {
        return Err(GdgnnError::Infeasible(format!("no simple {r}-regular graph on {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<usize> = (0..n * r).map(|p| p / r).collect();
    const ATTEMPTS: usize = 100_000;
    'attempt: for _ in 0..ATTEMPTS {
        points.shuffle(&mut rng);
        let mut seen = std::collections::HashSet::with_capacity(n * r / 2);
        let mut edges = Vec::with_capacity(n * r / 2);
        for pair in points.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        return Graph::build(n, edges, true);
    }
    Err(GdgnnError::Infeasible(format!(
        "pairing model found no simple {r}-regular graph on {n} nodes in {ATTEMPTS} attempts"
    )))
}

/// The skip lengths of the ten standard 41-node circular skip link classes.
pub const CSL_SKIPS: [usize; 10] = [2, 3, 4, 5, 6, 9, 11, 12, 13, 16];

/// Cycle on `n` nodes plus chords `i -- i + skip (mod n)`.
pub fn csl_graph(n: usize, skip: usize) -> Result<Graph> {
    if n < 5 || skip < 2 || 2 * skip >= n {
        return Err(GdgnnError::InvalidParameter(format!(
            "skip {skip} invalid for a {n}-node skip-link cycle (need 2 <= skip < n/2)"
        )));
    }
    let edges = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + skip) % n)]);
    Graph::build(n, edges, true)
}

/// Cayley graph on Z4 x Z4 with connection set ±(1,0), ±(0,1), ±(1,1).
pub fn shrikhande() -> Graph {
    let id = |a: usize, b: usize| (a % 4) * 4 + (b % 4);
    let mut edges = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for (da, db) in [(1, 0), (0, 1), (1, 1)] {
                edges.push((id(a, b), id(a + da, b + db)));
            }
        }
    }
    Graph::build(16, edges, true).expect("fixed construction")
}

/// Line graph of K4,4: cells of a 4x4 board, adjacent when they share a row
/// or a column.
pub fn rook4x4() -> Graph {
    let mut edges = Vec::new();
    for a in 0..16 {
        for b in a + 1..16 {
            if a / 4 == b / 4 || a % 4 == b % 4 {
                edges.push((a, b));
            }
        }
    }
    Graph::build(16, edges, true).expect("fixed construction")
}

/// Small fixed graphs with known answers.
pub mod fixtures {
    use super::*;

    /// A triangle (nodes 0..3) next to a 4-cycle (nodes 3..7). Every node has
    /// degree two.
    pub fn triangle_and_square() -> Graph {
        Graph::build(7, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 6), (6, 3)], true).expect("fixed")
    }

    /// The 6-cycle. Links A-B = (0, 1) and A-C = (0, 3).
    pub fn hexagon() -> Graph {
        Graph::build(6, (0..6).map(|i| (i, (i + 1) % 6)), true).expect("fixed")
    }

    pub const HEX_A: NodeId = 0;
    pub const HEX_B: NodeId = 1;
    pub const HEX_C: NodeId = 3;

    /// Four hub nodes A, B, C, D (0..4) on a ring, consecutive hubs joined
    /// through 1, 3, 1 and 3 private degree-two connectors (4..12). All hubs
    /// look alike to 1-WL, as do all connectors, yet A-B shares one
    /// connector while B-C shares three.
    pub fn connector_ring() -> Graph {
        let mut edges = Vec::new();
        let mut next = 4;
        for (a, b, k) in [(0, 1, 1), (1, 2, 3), (2, 3, 1), (3, 0, 3)] {
            for _ in 0..k {
                edges.push((a, next));
                edges.push((b, next));
                next += 1;
            }
        }
        Graph::build(next, edges, true).expect("fixed")
    }

    pub const RING_A: NodeId = 0;
    pub const RING_B: NodeId = 1;
    pub const RING_C: NodeId = 2;
}
