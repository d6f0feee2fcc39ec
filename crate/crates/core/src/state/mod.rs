//! Dynamic road-network state, network distances, features and metrics.

mod centrality;
mod features;

pub use self::centrality::centralities;
pub use self::features::{edge_features, FeatureSet, EDGE_FEATURES, FACE_FEATURES, FEATURE_GROUPS, NODE_FEATURES};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EdgeId, FaceId, NodeId, PlanarGraph};

/// Per-slum data that never changes during an episode.
#[derive(Debug)]
pub struct Slum {
    pub id: String,
    pub graph: PlanarGraph,
    pub centrality: Vec<[f64; 4]>,
    /// Stand-in for an unreachable distance: twice the diameter of the
    /// graph with every edge treated as a road.
    pub sentinel: f64,
    pub exterior_node: Vec<bool>,
    pub candidates: Vec<EdgeId>,
    /// Straight-line distance between each edge's endpoints.
    pub chord: Vec<f64>,
}

impl Slum {
    pub fn new(id: impl Into<String>, graph: PlanarGraph) -> Result<Arc<Slum>> {
        if graph.faces.is_empty() {
            return Err(Error::Topology("slum has no places".into()));
        }
        let centrality = centralities(&graph)?;
        let all_roads = vec![true; graph.edges.len()];
        let full = all_pairs(&graph, &all_roads);
        let diameter = full.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
        let sentinel = if diameter > 0.0 { 2.0 * diameter } else { 1.0 };
        let mut exterior_node = vec![false; graph.nodes.len()];
        for e in graph.edges.iter().filter(|e| e.exterior) {
            exterior_node[e.ends.0] = true;
            exterior_node[e.ends.1] = true;
        }
        let candidates = graph.candidate_edges().collect();
        let chord = graph.edges.iter().map(|e| graph.nodes[e.ends.0].dist(graph.nodes[e.ends.1])).collect();
        Ok(Arc::new(Slum { id: id.into(), graph, centrality, sentinel, exterior_node, candidates, chord }))
    }

    pub fn node_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edges.len()
    }

    pub fn face_count(&self) -> usize {
        self.graph.faces.len()
    }

    pub fn total_candidate_cost(&self) -> f64 {
        self.candidates.iter().map(|&e| self.graph.edges[e].cost).sum()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Item(f64, NodeId);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest-path lengths from `source` over edges with `road[e]` set.
pub fn dijkstra(g: &PlanarGraph, road: &[bool], source: NodeId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.nodes.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, source));
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &e in &g.node_edges[v] {
            if !road[e] {
                continue;
            }
            let w = g.edges[e].other(v);
            let nd = d + g.edges[e].length;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
    dist
}

/// Row-major all-pairs shortest paths over road edges (`INFINITY` when
/// unreachable, 0 on the diagonal).
pub fn all_pairs(g: &PlanarGraph, road: &[bool]) -> Vec<f64> {
    let n = g.nodes.len();
    let mut out = Vec::with_capacity(n * n);
    for s in 0..n {
        out.extend(dijkstra(g, road, s));
    }
    // the two directions can differ in the last bit
    for a in 0..n {
        for b in (a + 1)..n {
            let d = out[a * n + b].min(out[b * n + a]);
            out[a * n + b] = d;
            out[b * n + a] = d;
        }
    }
    out
}

/// Final plan metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Planned segments consumed before universal connectivity; `None`
    /// when it was never reached.
    pub nr: Option<usize>,
    pub ad: f64,
    pub sc: f64,
    pub universal: bool,
}

/// The mutable environment state: which edges are roads, and everything
/// derived from that.
#[derive(Clone, Debug)]
pub struct SlumGraph {
    slum: Arc<Slum>,
    road: Vec<bool>,
    on_road: Vec<bool>,
    connected: Vec<bool>,
    connected_count: usize,
    dist: Vec<f64>,
    face_dist: Vec<f64>,
    history: Vec<EdgeId>,
    planned_cost: f64,
    universal_at: Option<usize>,
}

impl SlumGraph {
    pub fn new(slum: Arc<Slum>) -> Self {
        let road: Vec<bool> = slum.graph.edges.iter().map(|e| e.road).collect();
        let dist = all_pairs(&slum.graph, &road);
        let mut s = SlumGraph {
            on_road: vec![false; slum.node_count()],
            connected: vec![false; slum.face_count()],
            connected_count: 0,
            face_dist: Vec::new(),
            history: Vec::new(),
            planned_cost: 0.0,
            universal_at: None,
            road,
            dist,
            slum,
        };
        for v in 0..s.slum.node_count() {
            if s.slum.exterior_node[v] && !s.on_road[v] {
                s.flood_from(v);
            }
        }
        if s.all_connected() {
            s.universal_at = Some(0);
        }
        s.refresh_face_distances();
        s
    }

    /// Applies a road flag; returns the faces that became connected.
    pub fn set_road(&mut self, edge: EdgeId) -> Result<Vec<FaceId>> {
        if edge >= self.road.len() {
            return Err(Error::InvalidAction { edge, reason: "no such edge".into() });
        }
        if self.road[edge] {
            return Err(Error::InvalidAction { edge, reason: "already a road".into() });
        }
        let slum = Arc::clone(&self.slum);
        let e = &slum.graph.edges[edge];
        let (u, v) = e.ends;
        self.road[edge] = true;
        self.relax_distances(u, v, e.length);

        let mut newly = match (self.on_road[u], self.on_road[v]) {
            (true, false) => self.flood_from(v),
            (false, true) => self.flood_from(u),
            _ => Vec::new(),
        };
        newly.sort_unstable();

        self.history.push(edge);
        self.planned_cost += e.cost;
        if self.universal_at.is_none() && self.all_connected() {
            self.universal_at = Some(self.history.len());
        }
        self.refresh_face_distances();
        Ok(newly)
    }

    /// Exact update for one added edge: a new shortest path uses it at
    /// most once.
    fn relax_distances(&mut self, u: NodeId, v: NodeId, w: f64) {
        let n = self.slum.node_count();
        let du: Vec<f64> = (0..n).map(|a| self.dist[a * n + u]).collect();
        let dv: Vec<f64> = (0..n).map(|a| self.dist[a * n + v]).collect();
        for a in 0..n {
            if !du[a].is_finite() && !dv[a].is_finite() {
                continue;
            }
            for b in a..n {
                // summed so that (a, b) and (b, a) round identically
                let via = ((du[a] + dv[b]) + w).min((dv[a] + du[b]) + w);
                if via < self.dist[a * n + b] {
                    self.dist[a * n + b] = via;
                    self.dist[b * n + a] = via;
                }
            }
        }
    }

    /// Marks everything reachable from `start` over roads as on the
    /// network; returns the faces this connected.
    fn flood_from(&mut self, start: NodeId) -> Vec<FaceId> {
        let slum = Arc::clone(&self.slum);
        let g = &slum.graph;
        let mut newly = Vec::new();
        let mut stack = vec![start];
        self.on_road[start] = true;
        while let Some(n) = stack.pop() {
            for &f in &g.node_faces[n] {
                if !self.connected[f] {
                    self.connected[f] = true;
                    self.connected_count += 1;
                    newly.push(f);
                }
            }
            for &e in &g.node_edges[n] {
                let w = g.edges[e].other(n);
                if self.road[e] && !self.on_road[w] {
                    self.on_road[w] = true;
                    stack.push(w);
                }
            }
        }
        newly
    }

    fn refresh_face_distances(&mut self) {
        let g = &self.slum.graph;
        let nf = g.faces.len();
        let n = g.nodes.len();
        let sentinel = self.slum.sentinel;
        let access: Vec<Vec<NodeId>> = g
            .faces
            .iter()
            .map(|f| {
                let mut a: Vec<NodeId> = f.nodes.iter().copied().filter(|&x| self.on_road[x]).collect();
                a.sort_unstable();
                a.dedup();
                a
            })
            .collect();
        let mut fd = vec![0.0; nf * nf];
        for fu in 0..nf {
            for fv in (fu + 1)..nf {
                let mut best = f64::INFINITY;
                for &a in &access[fu] {
                    for &b in &access[fv] {
                        best = best.min(self.dist[a * n + b]);
                    }
                }
                let d = if best.is_finite() { best.min(sentinel) } else { sentinel };
                fd[fu * nf + fv] = d;
                fd[fv * nf + fu] = d;
            }
        }
        self.face_dist = fd;
    }

    pub fn slum(&self) -> &Arc<Slum> {
        &self.slum
    }

    pub fn graph(&self) -> &PlanarGraph {
        &self.slum.graph
    }

    pub fn is_road(&self, e: EdgeId) -> bool {
        self.road[e]
    }

    pub fn road_flags(&self) -> &[bool] {
        &self.road
    }

    /// Whether `n` is joined to the exterior network through roads.
    pub fn on_road(&self, n: NodeId) -> bool {
        self.on_road[n]
    }

    pub fn is_connected(&self, f: FaceId) -> bool {
        self.connected[f]
    }

    pub fn connected_count(&self) -> usize {
        self.connected_count
    }

    pub fn unconnected_count(&self) -> usize {
        self.connected.len() - self.connected_count
    }

    pub fn all_connected(&self) -> bool {
        self.connected_count == self.connected.len()
    }

    pub fn history(&self) -> &[EdgeId] {
        &self.history
    }

    pub fn step_index(&self) -> usize {
        self.history.len()
    }

    pub fn planned_cost(&self) -> f64 {
        self.planned_cost
    }

    /// Network distance between two nodes over the current roads.
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.dist[a * self.slum.node_count() + b]
    }

    pub fn distance_matrix(&self) -> &[f64] {
        &self.dist
    }

    /// Shortest road distance between the access nodes of two faces;
    /// the sentinel when either face is unconnected.
    pub fn face_distance(&self, fu: FaceId, fv: FaceId) -> f64 {
        self.face_dist[fu * self.slum.face_count() + fv]
    }

    /// Number of unconnected faces containing node `n`.
    pub fn unconnected_faces_at(&self, n: NodeId) -> usize {
        self.slum.graph.node_faces[n].iter().filter(|&&f| !self.connected[f]).count()
    }

    /// Mean face distance over all unordered face pairs (0 with one face).
    pub fn average_face_distance(&self) -> f64 {
        let nf = self.slum.face_count();
        if nf < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for u in 0..nf {
            for v in (u + 1)..nf {
                total += self.face_dist[u * nf + v];
            }
        }
        total * 2.0 / (nf * (nf - 1)) as f64
    }

    pub fn metrics(&self) -> Metrics {
        Metrics { nr: self.universal_at, ad: self.average_face_distance(), sc: self.planned_cost, universal: self.all_connected() }
    }

    pub fn features(&self) -> FeatureSet {
        FeatureSet::compute(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_planar_graph;
    use crate::harness::generate_synthetic;

    fn grid(rows: usize, cols: usize) -> Arc<Slum> {
        let g = build_planar_graph(&generate_synthetic(rows, cols, 0.0, 0).unwrap()).unwrap();
        Slum::new("grid", g).unwrap()
    }

    /// Node id of grid vertex (r, c) in the unsimplified unit grid.
    fn node_at(s: &Slum, r: f64, c: f64) -> NodeId {
        s.graph.nodes.iter().position(|p| p.x == c && p.y == r).unwrap()
    }

    fn face_at(s: &Slum, r: f64, c: f64) -> FaceId {
        s.graph
            .faces
            .iter()
            .position(|f| {
                f.nodes.iter().all(|&n| {
                    let p = s.graph.nodes[n];
                    (p.x == c || p.x == c + 1.0) && (p.y == r || p.y == r + 1.0)
                })
            })
            .unwrap()
    }

    #[test]
    fn three_by_three_center_is_the_only_unconnected_face() {
        let slum = grid(3, 3);
        let s = SlumGraph::new(slum.clone());
        assert_eq!(s.unconnected_count(), 1);
        assert!(!s.is_connected(face_at(&slum, 1.0, 1.0)));
        assert_eq!(s.metrics(), Metrics { nr: None, ad: s.average_face_distance(), sc: 0.0, universal: false });
    }

    #[test]
    fn connecting_edge_connects_center() {
        let slum = grid(3, 3);
        let mut s = SlumGraph::new(slum.clone());
        let e = slum.graph.edge_between(node_at(&slum, 0.0, 1.0), node_at(&slum, 1.0, 1.0)).unwrap();
        let newly = s.set_road(e).unwrap();
        assert_eq!(newly, vec![face_at(&slum, 1.0, 1.0)]);
        assert!(s.all_connected());
        assert_eq!(s.metrics().nr, Some(1));
        assert!(matches!(s.set_road(e), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn edge_between_connected_faces_adds_no_access() {
        let slum = grid(3, 3);
        let mut s = SlumGraph::new(slum.clone());
        let e = slum.graph.edge_between(node_at(&slum, 0.0, 1.0), node_at(&slum, 1.0, 1.0)).unwrap();
        s.set_road(e).unwrap();
        let before = s.connected_count();
        let e2 = slum.graph.edge_between(node_at(&slum, 1.0, 1.0), node_at(&slum, 1.0, 2.0)).unwrap();
        assert!(s.set_road(e2).unwrap().is_empty());
        assert_eq!(s.connected_count(), before);
    }

    #[test]
    fn detached_road_reaches_network_later() {
        let slum = grid(4, 4);
        let mut s = SlumGraph::new(slum.clone());
        let inner = slum.graph.edge_between(node_at(&slum, 1.0, 1.0), node_at(&slum, 1.0, 2.0)).unwrap();
        assert!(s.set_road(inner).unwrap().is_empty());
        assert!(!s.on_road(node_at(&slum, 1.0, 2.0)));
        let link = slum.graph.edge_between(node_at(&slum, 0.0, 2.0), node_at(&slum, 1.0, 2.0)).unwrap();
        let newly = s.set_road(link).unwrap();
        assert!(s.on_road(node_at(&slum, 1.0, 1.0)));
        assert_eq!(newly.len(), 2);
    }

    #[test]
    fn all_connected_at_reset_gives_zero_nr() {
        let s = SlumGraph::new(grid(2, 2));
        let m = s.metrics();
        assert_eq!((m.nr, m.sc, m.universal), (Some(0), 0.0, true));
    }

    #[test]
    fn face_distance_basics() {
        let slum = grid(3, 3);
        let s = SlumGraph::new(slum.clone());
        let (a, b) = (face_at(&slum, 0.0, 0.0), face_at(&slum, 0.0, 1.0));
        assert_eq!(s.face_distance(a, a), 0.0);
        assert_eq!(s.face_distance(a, b), 0.0);
        let center = face_at(&slum, 1.0, 1.0);
        assert_eq!(s.face_distance(a, center), slum.sentinel);
        // opposite corners: nearest perimeter corner nodes are (0,1)/(1,0) and (2,3)/(3,2)
        let c = face_at(&slum, 2.0, 2.0);
        let d = s.face_distance(a, c);
        let oracle = dijkstra(&slum.graph, s.road_flags(), node_at(&slum, 0.0, 1.0))[node_at(&slum, 2.0, 3.0)];
        assert_eq!(d, oracle);
        assert_eq!(d, 4.0);
        assert_eq!(s.face_distance(c, a), d);
    }

    #[test]
    fn sentinel_exceeds_diameter() {
        let slum = grid(3, 3);
        assert_eq!(slum.sentinel, 12.0);
    }
}
