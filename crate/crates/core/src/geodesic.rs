//! Cutoff-bounded hop distances and geodesic extraction.
//!
//! A horizontal geodesic is one concrete shortest path between a pair. A
//! vertical geodesic is the set of endpoint neighbors that lie on *some*
//! shortest path of the pair. Both are read off breadth-first distance maps
//! truncated at `d_max`; pairs beyond the cutoff are reported as
//! unreachable rather than as errors.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GdgnnError, Result};
use crate::graph::{induced_degrees_skipping, Graph, NodeId};

pub const UNREACHABLE: u32 = u32::MAX;

/// Hop distances from one source, truncated at `d_max`.
///
/// A map may be built with one undirected edge masked out; every geodesic
/// read from it then also ignores that edge. Link training uses this so a
/// positive target edge cannot explain itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    source: NodeId,
    d_max: u32,
    masked: Option<(NodeId, NodeId)>,
    dist: Vec<u32>,
}

impl DistanceMap {
    #[inline]
    pub fn source(&self) -> NodeId {
        self.source
    }

    #[inline]
    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    #[inline]
    pub fn masked_edge(&self) -> Option<(NodeId, NodeId)> {
        self.masked
    }

    /// Distance to `w`, or [`UNREACHABLE`].
    #[inline]
    pub fn get(&self, w: NodeId) -> u32 {
        self.dist[w]
    }

    #[inline]
    pub fn finite(&self, w: NodeId) -> Option<u32> {
        let d = self.dist[w];
        (d != UNREACHABLE).then_some(d)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }

    #[inline]
    fn blocked(&self, a: NodeId, b: NodeId) -> bool {
        is_masked(self.masked, a, b)
    }
}

#[inline]
fn is_masked(mask: Option<(NodeId, NodeId)>, a: NodeId, b: NodeId) -> bool {
    match mask {
        Some((x, y)) => (a == x && b == y) || (a == y && b == x),
        None => false,
    }
}

pub fn bfs_distances(g: &Graph, source: NodeId, d_max: u32) -> DistanceMap {
    bfs_distances_masked(g, source, d_max, None)
}

/// Breadth-first distances that never traverse the `masked` edge.
pub fn bfs_distances_masked(
    g: &Graph,
    source: NodeId,
    d_max: u32,
    masked: Option<(NodeId, NodeId)>,
) -> DistanceMap {
    assert!(source < g.num_nodes(), "source {source} out of range");
    let mut dist = vec![UNREACHABLE; g.num_nodes()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x];
        if dx >= d_max {
            continue;
        }
        for &y in g.neighbors(x) {
            if dist[y] == UNREACHABLE && !is_masked(masked, x, y) {
                dist[y] = dx + 1;
                queue.push_back(y);
            }
        }
    }
    DistanceMap {
        source,
        d_max,
        masked,
        dist,
    }
}

/// How ties between equally short continuations are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Lexicographic,
    /// Uniform choice, reproducible per `(seed, u, v)`.
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorizontalGeodesic {
    pub path: Vec<NodeId>,
}

impl HorizontalGeodesic {
    pub fn distance(&self) -> usize {
        self.path.len() - 1
    }
}

/// Walks from `u` towards the root of `dmap_v`, one hop closer each step.
/// Returns `None` when `u` is beyond the cutoff.
pub fn horizontal_geodesic(
    g: &Graph,
    u: NodeId,
    v: NodeId,
    dmap_v: &DistanceMap,
    policy: TieBreak,
) -> Option<HorizontalGeodesic> {
    debug_assert_eq!(dmap_v.source(), v);
    let mut cur_d = dmap_v.finite(u)?;
    let mut rng = match policy {
        TieBreak::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(
            seed ^ (u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (v as u64).rotate_left(32),
        )),
        TieBreak::Lexicographic => None,
    };
    let mut path = Vec::with_capacity(cur_d as usize + 1);
    path.push(u);
    let mut cur = u;
    let mut candidates = Vec::new();
    while cur_d > 0 {
        candidates.clear();
        candidates.extend(
            g.neighbors(cur)
                .iter()
                .copied()
                .filter(|&w| dmap_v.get(w) == cur_d - 1 && !dmap_v.blocked(cur, w)),
        );
        let next = match rng.as_mut() {
            Some(r) => *candidates.choose(r).expect("distance map is consistent"),
            None => candidates[0],
        };
        path.push(next);
        cur = next;
        cur_d -= 1;
    }
    Some(HorizontalGeodesic { path })
}

/// Endpoint-adjacent shortest-path nodes of a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerticalGeodesic {
    pub near_u: Vec<NodeId>,
    pub near_v: Vec<NodeId>,
    pub distance: u32,
    /// Degrees inside the subgraph induced by `near_u ∪ near_v`, not counting
    /// the target pair itself as an edge.
    pub degrees: BTreeMap<NodeId, usize>,
}

impl VerticalGeodesic {
    /// `near_u ∪ near_v`, ascending and duplicate-free.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut all: Vec<NodeId> = self.near_u.iter().chain(&self.near_v).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Neighbors of `u` and of `v` that sit on a shortest `u`-`v` path.
/// Returns `None` when the pair is beyond the cutoff. For `u == v` both
/// sides are empty and the distance is zero.
pub fn vertical_geodesic(
    g: &Graph,
    u: NodeId,
    v: NodeId,
    dmap_u: &DistanceMap,
    dmap_v: &DistanceMap,
) -> Option<VerticalGeodesic> {
    debug_assert_eq!(dmap_u.d_max(), dmap_v.d_max());
    let d = dmap_v.finite(u)?;
    let side = |i: NodeId| -> Vec<NodeId> {
        if d == 0 {
            return Vec::new();
        }
        g.neighbors(i)
            .iter()
            .copied()
            .filter(|&w| {
                !dmap_v.blocked(i, w)
                    && match (dmap_u.finite(w), dmap_v.finite(w)) {
                        (Some(a), Some(b)) => a + b == d,
                        _ => false,
                    }
            })
            .collect()
    };
    let near_u = side(u);
    let near_v = side(v);
    let mut all: Vec<NodeId> = near_u.iter().chain(&near_v).copied().collect();
    all.sort_unstable();
    all.dedup();
    let degrees = induced_degrees_skipping(g, &all, Some((u, v)));
    Some(VerticalGeodesic {
        near_u,
        near_v,
        distance: d,
        degrees,
    })
}

/// The side of a vertical geodesic next to `s`: neighbors of `s` one hop
/// closer to the root `v` of `dmap_v`.
pub fn vertical_geodesic_one_side(
    g: &Graph,
    s: NodeId,
    dmap_v: &DistanceMap,
) -> Result<Vec<NodeId>> {
    let ds = dmap_v.finite(s).ok_or_else(|| {
        GdgnnError::InvalidParameter(format!(
            "node {s} is beyond d_max = {} of source {}",
            dmap_v.d_max(),
            dmap_v.source()
        ))
    })?;
    if ds == 0 {
        return Ok(Vec::new());
    }
    Ok(g.neighbors(s)
        .iter()
        .copied()
        .filter(|&w| dmap_v.get(w) == ds - 1 && !dmap_v.blocked(s, w))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cycle(n: usize) -> Graph {
        Graph::build(n, (0..n).map(|i| (i, (i + 1) % n)), true).unwrap()
    }

    #[test]
    fn cycle_distances_and_cutoff() {
        let g = cycle(6);
        assert_eq!(bfs_distances(&g, 0, 3).as_slice(), &[0, 1, 2, 3, 2, 1]);
        let d2 = bfs_distances(&g, 0, 2);
        assert_eq!(d2.get(3), UNREACHABLE);
        assert_eq!(d2.get(2), 2);
    }

    #[test]
    fn masked_bfs_routes_around_edge() {
        let g = cycle(6);
        let d = bfs_distances_masked(&g, 0, 5, Some((1, 0)));
        assert_eq!(d.as_slice(), &[0, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn adjacent_pair_geodesics() {
        let g = cycle(6);
        let d0 = bfs_distances(&g, 0, 3);
        let d1 = bfs_distances(&g, 1, 3);
        let h = horizontal_geodesic(&g, 0, 1, &d1, TieBreak::Lexicographic).unwrap();
        assert_eq!(h.path, vec![0, 1]);
        let vg = vertical_geodesic(&g, 0, 1, &d0, &d1).unwrap();
        assert_eq!(vg.near_u, vec![1]);
        assert_eq!(vg.near_v, vec![0]);
        assert_eq!(vg.distance, 1);
        assert!(vg.degrees.values().all(|&d| d == 0));
    }

    #[test]
    fn opposite_cycle_nodes_take_smaller_branch() {
        let g = cycle(6);
        let d3 = bfs_distances(&g, 3, 3);
        let h = horizontal_geodesic(&g, 0, 3, &d3, TieBreak::Lexicographic).unwrap();
        assert_eq!(h.path, vec![0, 1, 2, 3]);
        let d0 = bfs_distances(&g, 0, 3);
        let vg = vertical_geodesic(&g, 0, 3, &d0, &d3).unwrap();
        assert_eq!(vg.near_u, vec![1, 5]);
        assert_eq!(vg.near_v, vec![2, 4]);
    }

    #[test]
    fn beyond_cutoff_is_unreachable() {
        let g = cycle(6);
        let d0 = bfs_distances(&g, 0, 2);
        let d3 = bfs_distances(&g, 3, 2);
        assert!(horizontal_geodesic(&g, 0, 3, &d3, TieBreak::Lexicographic).is_none());
        assert!(vertical_geodesic(&g, 0, 3, &d0, &d3).is_none());
        assert!(vertical_geodesic_one_side(&g, 3, &d0).is_err());
    }

    #[test]
    fn same_node_is_distance_zero() {
        let g = cycle(6);
        let d0 = bfs_distances(&g, 0, 3);
        let vg = vertical_geodesic(&g, 0, 0, &d0, &d0).unwrap();
        assert_eq!(vg.distance, 0);
        assert!(vg.nodes().is_empty());
        let h = horizontal_geodesic(&g, 0, 0, &d0, TieBreak::Lexicographic).unwrap();
        assert_eq!(h.path, vec![0]);
    }

    #[test]
    fn one_side_on_cycle() {
        let g = cycle(6);
        let d0 = bfs_distances(&g, 0, 3);
        assert_eq!(vertical_geodesic_one_side(&g, 1, &d0).unwrap(), vec![0]);
        assert_eq!(vertical_geodesic_one_side(&g, 3, &d0).unwrap(), vec![2, 4]);
    }

    #[test]
    fn masked_target_edge_not_in_vertical_geodesic() {
        // square 0-1-2-3-0: with 0-1 masked, the only route is 0-3-2-1
        let g = cycle(4);
        let d0 = bfs_distances_masked(&g, 0, 3, Some((0, 1)));
        let d1 = bfs_distances_masked(&g, 1, 3, Some((0, 1)));
        let vg = vertical_geodesic(&g, 0, 1, &d0, &d1).unwrap();
        assert_eq!(vg.distance, 3);
        assert_eq!(vg.near_u, vec![3]);
        assert_eq!(vg.near_v, vec![2]);
        let h = horizontal_geodesic(&g, 0, 1, &d1, TieBreak::Lexicographic).unwrap();
        assert_eq!(h.path, vec![0, 3, 2, 1]);
    }

    #[test]
    fn seeded_random_is_reproducible_and_valid() {
        let g = cycle(8);
        let d4 = bfs_distances(&g, 4, 4);
        let paths: BTreeSet<Vec<usize>> = (0..32)
            .map(|seed| {
                let a = horizontal_geodesic(&g, 0, 4, &d4, TieBreak::SeededRandom(seed)).unwrap();
                let b = horizontal_geodesic(&g, 0, 4, &d4, TieBreak::SeededRandom(seed)).unwrap();
                assert_eq!(a, b);
                a.path
            })
            .collect();
        assert_eq!(
            paths,
            BTreeSet::from([vec![0, 1, 2, 3, 4], vec![0, 7, 6, 5, 4]])
        );
    }

    // ---- exhaustive oracles -------------------------------------------------

    fn floyd(g: &Graph) -> Vec<Vec<u32>> {
        let n = g.num_nodes();
        let inf = u32::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (u, row) in d.iter_mut().enumerate() {
            row[u] = 0;
            for &v in g.neighbors(u) {
                row[v] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        d
    }

    /// Every simple path from `u` to `v` with exactly `len` edges.
    fn paths_of_length(g: &Graph, u: usize, v: usize, len: usize) -> Vec<Vec<usize>> {
        fn rec(g: &Graph, cur: usize, v: usize, left: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left == 0 {
                if cur == v {
                    out.push(path.clone());
                }
                return;
            }
            for &w in g.neighbors(cur) {
                if !path.contains(&w) {
                    path.push(w);
                    rec(g, w, v, left - 1, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(g, u, v, len, &mut vec![u], &mut out);
        out
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (2usize..=9).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..20)
                .prop_map(move |edges| Graph::build(n, edges, true).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bfs_matches_floyd_warshall(g in arb_graph(), d_max in 1u32..5) {
            let fw = floyd(&g);
            for s in 0..g.num_nodes() {
                let dm = bfs_distances(&g, s, d_max);
                for w in 0..g.num_nodes() {
                    let want = if fw[s][w] <= d_max { fw[s][w] } else { UNREACHABLE };
                    prop_assert_eq!(dm.get(w), want);
                }
            }
        }

        #[test]
        fn geodesics_match_path_enumeration(g in arb_graph(), d_max in 1u32..5) {
            let n = g.num_nodes();
            let maps: Vec<DistanceMap> = (0..n).map(|s| bfs_distances(&g, s, d_max)).collect();
            let fw = floyd(&g);
            for u in 0..n {
                for v in 0..n {
                    if u == v { continue; }
                    let d = fw[u][v];
                    let vg = vertical_geodesic(&g, u, v, &maps[u], &maps[v]);
                    let hg = horizontal_geodesic(&g, u, v, &maps[v], TieBreak::Lexicographic);
                    if d > d_max {
                        prop_assert!(vg.is_none() && hg.is_none());
                        continue;
                    }
                    let all = paths_of_length(&g, u, v, d as usize);
                    prop_assert!(!all.is_empty());
                    let want_u: BTreeSet<usize> = all.iter().map(|p| p[1]).collect();
                    let want_v: BTreeSet<usize> = all.iter().map(|p| p[p.len() - 2]).collect();
                    let vg = vg.unwrap();
                    prop_assert_eq!(vg.near_u.iter().copied().collect::<BTreeSet<_>>(), want_u);
                    prop_assert_eq!(vg.near_v.iter().copied().collect::<BTreeSet<_>>(), want_v);
                    let rev = vertical_geodesic(&g, v, u, &maps[v], &maps[u]).unwrap();
                    prop_assert_eq!(&rev.near_v, &vg.near_u);
                    let hg = hg.unwrap();
                    prop_assert!(all.contains(&hg.path));
                    // lexicographic choice is the smallest shortest path
                    prop_assert_eq!(&hg.path, all.iter().min().unwrap());
                }
            }
        }

        #[test]
        fn one_side_matches_distance_oracle(g in arb_graph(), d_max in 1u32..5) {
            let fw = floyd(&g);
            for v in 0..g.num_nodes() {
                let dm = bfs_distances(&g, v, d_max);
                for s in 0..g.num_nodes() {
                    if fw[v][s] > d_max { continue; }
                    let got = vertical_geodesic_one_side(&g, s, &dm).unwrap();
                    let want: Vec<usize> = g.neighbors(s).iter().copied()
                        .filter(|&w| fw[v][s] > 0 && fw[v][w] + 1 == fw[v][s]).collect();
                    prop_assert_eq!(got, want);
                }
            }
        }
    }
}
