//! Geodesic pooling: pair-wise geodesic representations and the node, edge
//! and graph representations built from them.
//!
//! Extraction (which nodes sit on which geodesic) depends only on the graph,
//! so it is done once into a plan. A plan is then applied to any embedding
//! matrix, either on a [`Tape`] for training or directly for inference.
//!
//! Layout of one pair-wise geodesic vector, by variant:
//!
//! | variant        | columns                                         |
//! |----------------|-------------------------------------------------|
//! | `Horizontal`   | `R(h_w, w on path)` ⊕ distance channel           |
//! | `Vertical`     | `R(h_w, w in geodesic)` ⊕ one-hot distance       |
//! | `VerticalDeg`  | `R(h_w ⊕ deg(w))` ⊕ one-hot distance             |
//! | `DistOnly`     | one-hot distance                                 |
//! | `NeighborOnly` | `R(h_w)` over the pair's endpoints only          |
//!
//! The one-hot distance has `d_max + 2` buckets, the last one meaning
//! "beyond the cutoff". Horizontal geodesics only carry the full one-hot when
//! `horizontal_distance` is set; otherwise they keep a single column flagging
//! the beyond-cutoff case.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{GdgnnError, Result};
use crate::geodesic::{
    bfs_distances, bfs_distances_masked, horizontal_geodesic, vertical_geodesic, vertical_geodesic_one_side,
    DistanceMap, HorizontalGeodesic, TieBreak, VerticalGeodesic,
};
use crate::graph::{induced_degrees_skipping, Graph, NodeId};
use crate::tape::{Reducer, Segments, Tape, VarId};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Horizontal,
    Vertical,
    VerticalDeg,
    DistOnly,
    NeighborOnly,
}

impl std::str::FromStr for Variant {
    type Err = GdgnnError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "hor" | "horizontal" => Variant::Horizontal,
            "vert" | "vertical" => Variant::Vertical,
            "vertdeg" | "verticaldeg" => Variant::VerticalDeg,
            "dist" | "distonly" => Variant::DistOnly,
            "nei" | "neighbor" | "neighboronly" => Variant::NeighborOnly,
            _ => return Err(GdgnnError::InvalidParameter(format!("unknown variant '{s}'"))),
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Horizontal => "hor",
            Variant::Vertical => "vert",
            Variant::VerticalDeg => "vertdeg",
            Variant::DistOnly => "dist",
            Variant::NeighborOnly => "nei",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub variant: Variant,
    /// Reducer over the nodes of one geodesic.
    pub reducer: Reducer,
    /// Reducer over the pair geodesics around a target node.
    pub node_reducer: Reducer,
    /// Reducer over node representations of a graph.
    pub graph_reducer: Reducer,
    pub d_max: u32,
    /// Radius of the node-level neighborhood `N^k(v)`.
    pub node_k: usize,
    pub horizontal_distance: bool,
    pub tie_break: TieBreak,
    /// Ignore an existing `(u, v)` edge when extracting the geodesic of the
    /// pair `(u, v)`. Used for training positives.
    pub mask_target: bool,
}

impl PoolConfig {
    pub fn new(variant: Variant, d_max: u32) -> Self {
        Self {
            variant,
            reducer: Reducer::Sum,
            node_reducer: Reducer::Sum,
            graph_reducer: Reducer::Mean,
            d_max,
            node_k: d_max as usize,
            horizontal_distance: false,
            tie_break: TieBreak::Lexicographic,
            mask_target: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max == 0 {
            return Err(GdgnnError::InvalidParameter("d_max must be at least 1".into()));
        }
        if self.node_k == 0 || self.node_k > self.d_max as usize {
            return Err(GdgnnError::InvalidParameter(format!(
                "node_k = {} must lie in 1..={}",
                self.node_k, self.d_max
            )));
        }
        Ok(())
    }

    pub fn distance_buckets(&self) -> usize {
        self.d_max as usize + 2
    }

    fn embeds(&self) -> bool {
        self.variant != Variant::DistOnly
    }

    fn has_degree(&self) -> bool {
        self.variant == Variant::VerticalDeg
    }

    fn distance_width(&self) -> usize {
        match self.variant {
            Variant::NeighborOnly => 0,
            Variant::Horizontal if !self.horizontal_distance => 1,
            _ => self.distance_buckets(),
        }
    }

    /// Width of one pair-wise geodesic vector for embeddings of width `d`.
    pub fn geodesic_width(&self, d: usize) -> usize {
        (if self.embeds() { d } else { 0 }) + usize::from(self.has_degree()) + self.distance_width()
    }

    pub fn edge_width(&self, d: usize) -> usize {
        self.geodesic_width(d) + 2 * d
    }

    pub fn node_width(&self, d: usize) -> usize {
        self.geodesic_width(d) + d
    }

    pub fn graph_width(&self, d: usize) -> usize {
        self.node_width(d)
    }
}

/// Nodes (with optional subgraph degrees) and distance of one pair.
/// `distance = None` means beyond the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGeodesic {
    pub members: Vec<NodeId>,
    pub degrees: Vec<f64>,
    pub distance: Option<u32>,
}

impl PairGeodesic {
    fn beyond_cutoff() -> Self {
        Self {
            members: Vec::new(),
            degrees: Vec::new(),
            distance: None,
        }
    }

    pub fn from_horizontal(path: Option<&HorizontalGeodesic>) -> Self {
        match path {
            Some(p) => Self {
                members: p.path.clone(),
                degrees: Vec::new(),
                distance: Some(p.distance() as u32),
            },
            None => Self::beyond_cutoff(),
        }
    }

    /// Both sides, degrees taken jointly over `near_u ∪ near_v`.
    pub fn from_vertical(gd: Option<&VerticalGeodesic>) -> Self {
        match gd {
            Some(gd) => {
                let members = gd.nodes();
                let degrees = members.iter().map(|w| gd.degrees[w] as f64).collect();
                Self {
                    members,
                    degrees,
                    distance: Some(gd.distance),
                }
            }
            None => Self::beyond_cutoff(),
        }
    }
}

fn endpoint_maps(g: &Graph, u: NodeId, v: NodeId, cfg: &PoolConfig) -> (DistanceMap, DistanceMap) {
    let mask = (cfg.mask_target && g.has_edge(u, v)).then_some((u, v));
    (
        bfs_distances_masked(g, u, cfg.d_max, mask),
        bfs_distances_masked(g, v, cfg.d_max, mask),
    )
}

/// Geodesic of the edge target `(u, v)`.
pub fn edge_geodesic(g: &Graph, u: NodeId, v: NodeId, cfg: &PoolConfig) -> PairGeodesic {
    if cfg.variant == Variant::NeighborOnly {
        return neighbor_pair(u, v);
    }
    let (du, dv) = endpoint_maps(g, u, v, cfg);
    edge_geodesic_with(g, u, v, &du, &dv, cfg)
}

fn neighbor_pair(u: NodeId, v: NodeId) -> PairGeodesic {
    PairGeodesic {
        members: vec![u, v],
        degrees: Vec::new(),
        distance: None,
    }
}

/// Like [`edge_geodesic`] with caller-provided distance maps, so a map from a
/// shared endpoint can serve many queries.
pub fn edge_geodesic_with(
    g: &Graph,
    u: NodeId,
    v: NodeId,
    dmap_u: &DistanceMap,
    dmap_v: &DistanceMap,
    cfg: &PoolConfig,
) -> PairGeodesic {
    match cfg.variant {
        Variant::Horizontal => PairGeodesic::from_horizontal(horizontal_geodesic(g, u, v, dmap_v, cfg.tie_break).as_ref()),
        Variant::Vertical | Variant::VerticalDeg => {
            let mut p = PairGeodesic::from_vertical(vertical_geodesic(g, u, v, dmap_u, dmap_v).as_ref());
            if cfg.variant == Variant::Vertical {
                p.degrees.clear();
            }
            p
        }
        Variant::DistOnly => PairGeodesic {
            members: Vec::new(),
            degrees: Vec::new(),
            distance: dmap_v.finite(u),
        },
        Variant::NeighborOnly => neighbor_pair(u, v),
    }
}

/// Pair geodesics `(v, s)` for every `s` in `N^k(v)`, ascending in `s`.
/// Vertical geodesics keep only the side next to `s`, with degrees inside
/// that side alone.
pub fn node_geodesics(g: &Graph, v: NodeId, cfg: &PoolConfig) -> Result<Vec<PairGeodesic>> {
    if cfg.variant == Variant::Horizontal {
        return Err(GdgnnError::InvalidParameter(
            "horizontal geodesics are only defined for edge targets".into(),
        ));
    }
    let dmap = bfs_distances(g, v, cfg.d_max);
    let k = cfg.node_k as u32;
    let mut out = Vec::new();
    for s in 0..g.num_nodes() {
        let Some(ds) = dmap.finite(s) else { continue };
        if ds == 0 || ds > k {
            continue;
        }
        out.push(match cfg.variant {
            Variant::Vertical | Variant::VerticalDeg => {
                let members = vertical_geodesic_one_side(g, s, &dmap)?;
                let degrees = if cfg.variant == Variant::VerticalDeg {
                    let deg = induced_degrees_skipping(g, &members, None);
                    members.iter().map(|w| deg[w] as f64).collect()
                } else {
                    Vec::new()
                };
                PairGeodesic {
                    members,
                    degrees,
                    distance: Some(ds),
                }
            }
            Variant::DistOnly => PairGeodesic {
                members: Vec::new(),
                degrees: Vec::new(),
                distance: Some(ds),
            },
            Variant::NeighborOnly => PairGeodesic {
                members: vec![s],
                degrees: Vec::new(),
                distance: None,
            },
            Variant::Horizontal => unreachable!(),
        });
    }
    Ok(out)
}

/// Pair geodesics ready to be pooled against an embedding matrix.
#[derive(Debug, Clone)]
pub struct PairPlan {
    cfg: PoolConfig,
    segments: Arc<Segments>,
    /// Degree channel and distance channel, one row per pair.
    side: Matrix,
}

impl PairPlan {
    pub fn new(pairs: &[PairGeodesic], cfg: &PoolConfig) -> Self {
        let mut segments = Segments::new();
        let mut deg_segments = Segments::new();
        let mut deg_values = Vec::new();
        for p in pairs {
            segments.push(p.members.iter().copied());
            if cfg.has_degree() {
                let start = deg_values.len();
                deg_values.extend(p.degrees.iter().copied());
                deg_segments.push(start..deg_values.len());
            }
        }
        let dw = cfg.distance_width();
        let side_w = usize::from(cfg.has_degree()) + dw;
        let mut side = Matrix::zeros(pairs.len(), side_w);
        if cfg.has_degree() {
            let col = Matrix::from_vec(deg_values.len(), 1, deg_values).expect("one column");
            let (reduced, _) = crate::tape::segment_reduce(&col, &deg_segments, cfg.reducer);
            for i in 0..pairs.len() {
                side.set(i, 0, reduced.get(i, 0));
            }
        }
        let off = usize::from(cfg.has_degree());
        for (i, p) in pairs.iter().enumerate() {
            if dw == 1 {
                if p.distance.is_none() {
                    side.set(i, off, 1.0);
                }
            } else if dw > 1 {
                let bucket = match p.distance {
                    Some(d) if d <= cfg.d_max => d as usize,
                    _ => cfg.d_max as usize + 1,
                };
                side.set(i, off + bucket, 1.0);
            }
        }
        Self {
            cfg: *cfg,
            segments: Arc::new(segments),
            side,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Records the pooled pair vectors, one row per pair.
    pub fn record(&self, tape: &mut Tape, h: VarId) -> Result<VarId> {
        let mut parts = Vec::with_capacity(2);
        if self.cfg.embeds() {
            parts.push(tape.segment(h, self.segments.clone(), self.cfg.reducer)?);
        }
        if self.side.cols() > 0 {
            parts.push(tape.constant(self.side.clone()));
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat(&parts)
        }
    }
}

/// Edge targets: pair geodesic ⊕ `h_u` ⊕ `h_v`.
#[derive(Debug, Clone)]
pub struct EdgePlan {
    pairs: PairPlan,
    first: Arc<Segments>,
    second: Arc<Segments>,
}

impl EdgePlan {
    /// Extracts every target's geodesic, in parallel across targets.
    pub fn new(g: &Graph, targets: &[(NodeId, NodeId)], cfg: &PoolConfig) -> Result<Self> {
        cfg.validate()?;
        check_nodes(g, targets.iter().flat_map(|&(u, v)| [u, v]))?;
        let geos: Vec<PairGeodesic> = targets.par_iter().map(|&(u, v)| edge_geodesic(g, u, v, cfg)).collect();
        Ok(Self::from_geodesics(&geos, targets, cfg))
    }

    pub fn from_geodesics(geos: &[PairGeodesic], targets: &[(NodeId, NodeId)], cfg: &PoolConfig) -> Self {
        Self {
            pairs: PairPlan::new(geos, cfg),
            first: Arc::new(Segments::singletons(targets.iter().map(|t| t.0))),
            second: Arc::new(Segments::singletons(targets.iter().map(|t| t.1))),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn record(&self, tape: &mut Tape, h: VarId) -> Result<VarId> {
        let geo = self.pairs.record(tape, h)?;
        let hu = tape.segment(h, self.first.clone(), Reducer::Sum)?;
        let hv = tape.segment(h, self.second.clone(), Reducer::Sum)?;
        tape.concat(&[geo, hu, hv])
    }

    pub fn apply(&self, h: &Matrix) -> Result<Matrix> {
        apply_plan(h, |t, hv| self.record(t, hv))
    }
}

/// Node targets: `R^(n)` over the pair geodesics around each target ⊕ `h_v`.
#[derive(Debug, Clone)]
pub struct NodePlan {
    pairs: PairPlan,
    owners: Arc<Segments>,
    selves: Arc<Segments>,
    node_reducer: Reducer,
}

impl NodePlan {
    pub fn new(g: &Graph, targets: &[NodeId], cfg: &PoolConfig) -> Result<Self> {
        cfg.validate()?;
        check_nodes(g, targets.iter().copied())?;
        let per_target: Vec<Vec<PairGeodesic>> = targets
            .par_iter()
            .map(|&v| node_geodesics(g, v, cfg))
            .collect::<Result<_>>()?;
        let refs: Vec<&[PairGeodesic]> = per_target.iter().map(Vec::as_slice).collect();
        Ok(Self::from_geodesics(&refs, targets, cfg))
    }

    /// Builds the plan from geodesics extracted earlier with
    /// [`node_geodesics`], one list per target.
    pub fn from_geodesics(per_target: &[&[PairGeodesic]], targets: &[NodeId], cfg: &PoolConfig) -> Self {
        let mut owners = Segments::new();
        let mut flat = Vec::new();
        for geos in per_target {
            let start = flat.len();
            flat.extend(geos.iter().cloned());
            owners.push(start..flat.len());
        }
        Self {
            pairs: PairPlan::new(&flat, cfg),
            owners: Arc::new(owners),
            selves: Arc::new(Segments::singletons(targets.iter().copied())),
            node_reducer: cfg.node_reducer,
        }
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn record(&self, tape: &mut Tape, h: VarId) -> Result<VarId> {
        let width = self.pairs.cfg.geodesic_width(tape.value(h).cols());
        let pooled = if self.pairs.is_empty() {
            // no target has any neighbor: every geodesic part is zero
            tape.constant(Matrix::zeros(self.owners.len(), width))
        } else {
            let geo = self.pairs.record(tape, h)?;
            tape.segment(geo, self.owners.clone(), self.node_reducer)?
        };
        let hv = tape.segment(h, self.selves.clone(), Reducer::Sum)?;
        tape.concat(&[pooled, hv])
    }

    pub fn apply(&self, h: &Matrix) -> Result<Matrix> {
        apply_plan(h, |t, hv| self.record(t, hv))
    }
}

/// Graph target: `R^(g)` over the node representations of every node.
#[derive(Debug, Clone)]
pub struct GraphPlan {
    nodes: NodePlan,
    all: Arc<Segments>,
    graph_reducer: Reducer,
}

impl GraphPlan {
    pub fn new(g: &Graph, cfg: &PoolConfig) -> Result<Self> {
        let targets: Vec<NodeId> = (0..g.num_nodes()).collect();
        let mut all = Segments::new();
        all.push(0..g.num_nodes());
        Ok(Self {
            nodes: NodePlan::new(g, &targets, cfg)?,
            all: Arc::new(all),
            graph_reducer: cfg.graph_reducer,
        })
    }

    /// Sequential extraction, for callers that already parallelize across
    /// graphs.
    pub fn new_sequential(g: &Graph, cfg: &PoolConfig) -> Result<Self> {
        cfg.validate()?;
        let targets: Vec<NodeId> = (0..g.num_nodes()).collect();
        let per: Vec<Vec<PairGeodesic>> = targets.iter().map(|&v| node_geodesics(g, v, cfg)).collect::<Result<_>>()?;
        let refs: Vec<&[PairGeodesic]> = per.iter().map(Vec::as_slice).collect();
        let mut all = Segments::new();
        all.push(0..g.num_nodes());
        Ok(Self {
            nodes: NodePlan::from_geodesics(&refs, &targets, cfg),
            all: Arc::new(all),
            graph_reducer: cfg.graph_reducer,
        })
    }

    /// A `1 x graph_width` row.
    pub fn record(&self, tape: &mut Tape, h: VarId) -> Result<VarId> {
        let z = self.nodes.record(tape, h)?;
        tape.segment(z, self.all.clone(), self.graph_reducer)
    }

    pub fn apply(&self, h: &Matrix) -> Result<Matrix> {
        apply_plan(h, |t, hv| self.record(t, hv))
    }
}

fn apply_plan(h: &Matrix, f: impl FnOnce(&mut Tape, VarId) -> Result<VarId>) -> Result<Matrix> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let out = f(&mut tape, hv)?;
    Ok(tape.value(out).clone())
}

fn check_nodes(g: &Graph, nodes: impl Iterator<Item = NodeId>) -> Result<()> {
    for v in nodes {
        if v >= g.num_nodes() {
            return Err(GdgnnError::NodeOutOfRange {
                node: v,
                num_nodes: g.num_nodes(),
            });
        }
    }
    Ok(())
}

/// Pools one geodesic against `h`.
pub fn pool_geodesic(h: &Matrix, gd: &PairGeodesic, cfg: &PoolConfig) -> Result<Vec<f64>> {
    let plan = PairPlan::new(std::slice::from_ref(gd), cfg);
    Ok(apply_plan(h, |t, hv| plan.record(t, hv))?.into_vec())
}

/// Pools a horizontal path; `None` stands for a pair beyond the cutoff.
pub fn pool_horizontal(h: &Matrix, path: Option<&HorizontalGeodesic>, cfg: &PoolConfig) -> Result<Vec<f64>> {
    let cfg = PoolConfig {
        variant: Variant::Horizontal,
        ..*cfg
    };
    pool_geodesic(h, &PairGeodesic::from_horizontal(path), &cfg)
}

/// Pools a two-sided vertical geodesic. The degree channel is present when
/// `cfg.variant` is `VerticalDeg`.
pub fn pool_vertical(h: &Matrix, gd: Option<&VerticalGeodesic>, cfg: &PoolConfig) -> Result<Vec<f64>> {
    let variant = if cfg.variant == Variant::VerticalDeg {
        Variant::VerticalDeg
    } else {
        Variant::Vertical
    };
    let cfg = PoolConfig { variant, ..*cfg };
    pool_geodesic(h, &PairGeodesic::from_vertical(gd), &cfg)
}

pub fn node_representation(g: &Graph, h: &Matrix, v: NodeId, cfg: &PoolConfig) -> Result<Vec<f64>> {
    Ok(NodePlan::new(g, &[v], cfg)?.apply(h)?.into_vec())
}

pub fn edge_representation(g: &Graph, h: &Matrix, u: NodeId, v: NodeId, cfg: &PoolConfig) -> Result<Vec<f64>> {
    Ok(EdgePlan::new(g, &[(u, v)], cfg)?.apply(h)?.into_vec())
}

pub fn graph_representation(g: &Graph, h: &Matrix, cfg: &PoolConfig) -> Result<Vec<f64>> {
    Ok(GraphPlan::new(g, cfg)?.apply(h)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::bfs_distances;

    fn cycle(n: usize) -> Graph {
        Graph::build(n, (0..n).map(|i| (i, (i + 1) % n)), true).unwrap()
    }

    fn ones(n: usize) -> Matrix {
        Matrix::filled(n, 1, 1.0)
    }

    fn one_hot(len: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        v
    }

    #[test]
    fn horizontal_sum_counts_path_nodes() {
        let g = cycle(6);
        let cfg = PoolConfig::new(Variant::Horizontal, 3);
        let path = horizontal_geodesic(&g, 0, 3, &bfs_distances(&g, 3, 3), TieBreak::Lexicographic);
        assert_eq!(pool_horizontal(&ones(6), path.as_ref(), &cfg).unwrap(), vec![4.0, 0.0]);

        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![10.0, 20.0]]).unwrap();
        let g2 = Graph::build(2, [(0, 1)], true).unwrap();
        let p = horizontal_geodesic(&g2, 0, 1, &bfs_distances(&g2, 1, 2), TieBreak::Lexicographic);
        assert_eq!(pool_horizontal(&h, p.as_ref(), &cfg).unwrap(), vec![11.0, 22.0, 0.0]);
    }

    #[test]
    fn horizontal_distance_flag_widens_channel() {
        let g = cycle(6);
        let cfg = PoolConfig {
            horizontal_distance: true,
            ..PoolConfig::new(Variant::Horizontal, 3)
        };
        let v = edge_representation(&g, &ones(6), 0, 2, &cfg).unwrap();
        let mut want = vec![3.0];
        want.extend(one_hot(5, 2));
        want.extend([1.0, 1.0]);
        assert_eq!(v, want);
    }

    #[test]
    fn adjacent_pair_vertical_deg() {
        let g = cycle(6);
        let cfg = PoolConfig::new(Variant::VerticalDeg, 3);
        let gd = vertical_geodesic(&g, 0, 1, &bfs_distances(&g, 0, 3), &bfs_distances(&g, 1, 3));
        let v = pool_vertical(&ones(6), gd.as_ref(), &cfg).unwrap();
        let mut want = vec![2.0, 0.0];
        want.extend(one_hot(5, 1));
        assert_eq!(v, want);
    }

    #[test]
    fn beyond_cutoff_is_zero_with_infinite_bucket() {
        let g = cycle(8);
        let h = Matrix::filled(8, 3, 0.7);
        for variant in [Variant::Vertical, Variant::VerticalDeg, Variant::DistOnly, Variant::Horizontal] {
            let cfg = PoolConfig {
                horizontal_distance: true,
                ..PoolConfig::new(variant, 2)
            };
            let v = edge_representation(&g, &h, 0, 4, &cfg).unwrap();
            let gw = cfg.geodesic_width(3);
            let (geo, ends) = v.split_at(gw);
            let (body, dist) = geo.split_at(gw - cfg.distance_buckets());
            assert!(body.iter().all(|&x| x == 0.0), "{variant:?}");
            assert_eq!(dist, one_hot(4, 3).as_slice(), "{variant:?}");
            assert_eq!(ends, &[0.7; 6]);
        }
    }

    #[test]
    fn same_node_target_uses_distance_zero() {
        let g = cycle(5);
        let h = Matrix::from_rows(&(0..5).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let cfg = PoolConfig::new(Variant::Vertical, 2);
        let v = edge_representation(&g, &h, 3, 3, &cfg).unwrap();
        let mut want = vec![0.0];
        want.extend(one_hot(4, 0));
        want.extend([3.0, 3.0]);
        assert_eq!(v, want);
    }

    #[test]
    fn cycle_links_separated_by_distance_only() {
        // A = 0, B = 1, C = 3 on the 6-cycle with equal embeddings
        let g = cycle(6);
        let h = Matrix::filled(6, 4, 0.5);
        let dist = PoolConfig::new(Variant::DistOnly, 3);
        let ab = edge_representation(&g, &h, 0, 1, &dist).unwrap();
        let ac = edge_representation(&g, &h, 0, 3, &dist).unwrap();
        assert_eq!(&ab[..5], one_hot(5, 1).as_slice());
        assert_eq!(&ac[..5], one_hot(5, 3).as_slice());

        let nei = PoolConfig::new(Variant::NeighborOnly, 3);
        assert_eq!(
            edge_representation(&g, &h, 0, 1, &nei).unwrap(),
            edge_representation(&g, &h, 0, 3, &nei).unwrap()
        );
    }

    #[test]
    fn masked_target_hides_the_edge() {
        let g = cycle(6);
        let cfg = PoolConfig {
            mask_target: true,
            ..PoolConfig::new(Variant::DistOnly, 5)
        };
        let v = edge_representation(&g, &ones(6), 0, 1, &cfg).unwrap();
        assert_eq!(&v[..7], one_hot(7, 5).as_slice());
    }

    #[test]
    fn isolated_node_is_embedding_plus_zero() {
        let g = Graph::build(3, [(0, 1)], true).unwrap();
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let cfg = PoolConfig::new(Variant::VerticalDeg, 2);
        let v = node_representation(&g, &h, 2, &cfg).unwrap();
        let mut want = vec![0.0; cfg.geodesic_width(2)];
        want.extend([5.0, 6.0]);
        assert_eq!(v, want);
    }

    #[test]
    fn triangle_and_square_nodes_differ() {
        let g = Graph::build(7, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 6), (6, 3)], true).unwrap();
        let cfg = PoolConfig::new(Variant::Vertical, 2);
        let h = ones(7);
        let tri = node_representation(&g, &h, 0, &cfg).unwrap();
        let sq = node_representation(&g, &h, 3, &cfg).unwrap();
        // triangle: two neighbors at distance 1, each with geodesic {v}
        assert_eq!(tri, vec![2.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        // square: two at distance 1, the opposite corner at distance 2 with two geodesic nodes
        assert_eq!(sq, vec![4.0, 0.0, 2.0, 1.0, 0.0, 1.0]);
        assert_ne!(graph_representation(&g, &h, &cfg).unwrap(), {
            let g2 = Graph::build(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], true).unwrap();
            graph_representation(&g2, &ones(6), &cfg).unwrap()
        });
    }

    #[test]
    fn vertex_transitive_nodes_agree() {
        let g = cycle(6);
        let cfg = PoolConfig::new(Variant::VerticalDeg, 3);
        let first = node_representation(&g, &ones(6), 0, &cfg).unwrap();
        for v in 1..6 {
            assert_eq!(node_representation(&g, &ones(6), v, &cfg).unwrap(), first);
        }
    }

    #[test]
    fn single_node_graph_equals_node_rep() {
        let g = Graph::build(1, Vec::<(usize, usize)>::new(), true).unwrap();
        let h = Matrix::from_rows(&[vec![2.5]]).unwrap();
        let cfg = PoolConfig::new(Variant::Vertical, 2);
        assert_eq!(
            graph_representation(&g, &h, &cfg).unwrap(),
            node_representation(&g, &h, 0, &cfg).unwrap()
        );
    }

    #[test]
    fn horizontal_rejected_for_nodes() {
        let cfg = PoolConfig::new(Variant::Horizontal, 2);
        assert!(node_representation(&cycle(4), &ones(4), 0, &cfg).is_err());
    }

    #[test]
    fn node_k_bounds_checked() {
        let cfg = PoolConfig {
            node_k: 3,
            ..PoolConfig::new(Variant::Vertical, 2)
        };
        assert!(node_representation(&cycle(4), &ones(4), 0, &cfg).is_err());
    }

    #[test]
    fn widths_match_layout() {
        let g = cycle(7);
        let h = Matrix::filled(7, 3, 1.0);
        for variant in [
            Variant::Horizontal,
            Variant::Vertical,
            Variant::VerticalDeg,
            Variant::DistOnly,
            Variant::NeighborOnly,
        ] {
            let cfg = PoolConfig::new(variant, 3);
            assert_eq!(edge_representation(&g, &h, 0, 2, &cfg).unwrap().len(), cfg.edge_width(3));
            if variant != Variant::Horizontal {
                assert_eq!(node_representation(&g, &h, 0, &cfg).unwrap().len(), cfg.node_width(3));
                assert_eq!(graph_representation(&g, &h, &cfg).unwrap().len(), cfg.graph_width(3));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        fn arb_case() -> impl Strategy<Value = (Graph, Matrix, Vec<usize>)> {
            (2usize..10)
                .prop_flat_map(|n| {
                    (
                        Just(n),
                        proptest::collection::vec((0..n, 0..n), 0..2 * n),
                        proptest::collection::vec(-3i32..4, 2 * n),
                        any::<u64>(),
                    )
                })
                .prop_map(|(n, edges, feats, seed)| {
                    let g = Graph::build(n, edges, true).unwrap();
                    // small integers keep every sum exact, so comparisons can be bitwise
                    let h = Matrix::from_vec(n, 2, feats.into_iter().map(f64::from).collect()).unwrap();
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                    (g, h, perm)
                })
        }

        // means of means may round differently once summation order changes
        fn close(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
        }

        fn permute_rows(h: &Matrix, perm: &[usize]) -> Matrix {
            let mut out = Matrix::zeros(h.rows(), h.cols());
            for v in 0..h.rows() {
                out.row_mut(perm[v]).copy_from_slice(h.row(v));
            }
            out
        }

        proptest! {
            #[test]
            fn relabeling_commutes_with_pooling((g, h, perm) in arb_case()) {
                let pg = g.relabel(&perm).unwrap();
                let ph = permute_rows(&h, &perm);
                for variant in [Variant::Vertical, Variant::VerticalDeg, Variant::DistOnly, Variant::NeighborOnly] {
                    for reducer in [Reducer::Sum, Reducer::Mean, Reducer::Max] {
                        let cfg = PoolConfig { reducer, node_reducer: reducer, ..PoolConfig::new(variant, 3) };
                        for u in 0..g.num_nodes() {
                            prop_assert!(close(
                                &node_representation(&g, &h, u, &cfg).unwrap(),
                                &node_representation(&pg, &ph, perm[u], &cfg).unwrap()
                            ));
                            for v in 0..g.num_nodes() {
                                prop_assert!(close(
                                    &edge_representation(&g, &h, u, v, &cfg).unwrap(),
                                    &edge_representation(&pg, &ph, perm[u], perm[v], &cfg).unwrap()
                                ));
                            }
                        }
                        prop_assert!(close(
                            &graph_representation(&g, &h, &cfg).unwrap(),
                            &graph_representation(&pg, &ph, &cfg).unwrap()
                        ));
                    }
                }
            }

            #[test]
            fn all_ones_counts_are_exact((g, _h, _perm) in arb_case()) {
                let n = g.num_nodes();
                let h = Matrix::filled(n, 1, 1.0);
                let cfg = PoolConfig::new(Variant::Vertical, 3);
                for u in 0..n {
                    let du = bfs_distances(&g, u, 3);
                    for v in 0..n {
                        let dv = bfs_distances(&g, v, 3);
                        let gd = vertical_geodesic(&g, u, v, &du, &dv);
                        let pooled = pool_vertical(&h, gd.as_ref(), &cfg).unwrap();
                        prop_assert_eq!(pooled[0], gd.as_ref().map_or(0, |x| x.nodes().len()) as f64);
                        let path = horizontal_geodesic(&g, u, v, &dv, TieBreak::Lexicographic);
                        let hp = pool_horizontal(&h, path.as_ref(), &cfg).unwrap();
                        prop_assert_eq!(hp[0], path.as_ref().map_or(0, |p| p.path.len()) as f64);
                    }
                }
            }
        }
    }
}
