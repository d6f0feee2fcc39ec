use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{bbox, snap_tolerance, Point, SlumGeometry};
use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;
pub type FaceId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub ends: (NodeId, NodeId),
    /// Accumulated polyline length.
    pub length: f64,
    pub cost: f64,
    pub road: bool,
    pub exterior: bool,
    /// Full polyline from `ends.0` to `ends.1`, both included.
    pub path: Vec<Point>,
}

impl Edge {
    pub fn other(&self, n: NodeId) -> NodeId {
        if self.ends.0 == n {
            self.ends.1
        } else {
            self.ends.0
        }
    }
}

/// A bounded face. `nodes[k]` is the start of `edges[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
}

/// Planar subdivision of a slum: junctions, boundary segments and places.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarGraph {
    pub nodes: Vec<Point>,
    pub edges: Vec<Edge>,
    pub faces: Vec<Face>,
    pub node_edges: Vec<Vec<EdgeId>>,
    pub edge_faces: Vec<Vec<FaceId>>,
    pub node_faces: Vec<Vec<FaceId>>,
}

impl PlanarGraph {
    /// Assembles a graph and derives every incidence map. Face edge cycles
    /// are rebuilt from the node cycles.
    pub fn from_parts(nodes: Vec<Point>, edges: Vec<Edge>, face_cycles: Vec<Vec<NodeId>>) -> Result<Self> {
        let mut pair = HashMap::with_capacity(edges.len());
        for (id, e) in edges.iter().enumerate() {
            let (a, b) = e.ends;
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::Topology(format!("edge {id} references a missing node")));
            }
            if a == b {
                return Err(Error::Topology(format!("edge {id} is a self-loop")));
            }
            if pair.insert(key(a, b), id).is_some() {
                return Err(Error::Topology(format!("duplicate edge between nodes {a} and {b}")));
            }
        }
        let mut faces = Vec::with_capacity(face_cycles.len());
        for (f, cycle) in face_cycles.into_iter().enumerate() {
            if cycle.len() < 3 {
                return Err(Error::Topology(format!("face {f} has fewer than 3 nodes")));
            }
            let edges_of_face = (0..cycle.len())
                .map(|k| {
                    let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
                    pair.get(&key(a, b)).copied().ok_or_else(|| Error::Topology(format!("face {f} cycle is not closed at nodes {a}-{b}")))
                })
                .collect::<Result<Vec<_>>>()?;
            faces.push(Face { nodes: cycle, edges: edges_of_face });
        }
        let mut g = PlanarGraph { nodes, edges, faces, node_edges: Vec::new(), edge_faces: Vec::new(), node_faces: Vec::new() };
        g.rebuild_incidence();
        g.check_topology()?;
        Ok(g)
    }

    pub(crate) fn rebuild_incidence(&mut self) {
        self.node_edges = vec![Vec::new(); self.nodes.len()];
        for (id, e) in self.edges.iter().enumerate() {
            self.node_edges[e.ends.0].push(id);
            self.node_edges[e.ends.1].push(id);
        }
        self.edge_faces = vec![Vec::new(); self.edges.len()];
        self.node_faces = vec![Vec::new(); self.nodes.len()];
        for (f, face) in self.faces.iter().enumerate() {
            for &e in &face.edges {
                if !self.edge_faces[e].contains(&f) {
                    self.edge_faces[e].push(f);
                }
            }
            for &n in &face.nodes {
                if !self.node_faces[n].contains(&f) {
                    self.node_faces[n].push(f);
                }
            }
        }
    }

    fn check_topology(&self) -> Result<()> {
        for (id, faces) in self.edge_faces.iter().enumerate() {
            if faces.is_empty() && !self.edges[id].exterior {
                return Err(Error::Topology(format!("edge {id} is dangling (borders no face)")));
            }
            if faces.len() > 2 {
                return Err(Error::Topology(format!("edge {id} borders {} faces", faces.len())));
            }
        }
        Ok(())
    }

    pub fn candidate_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| !e.road).map(|(i, _)| i)
    }

    pub fn candidate_count(&self) -> usize {
        self.candidate_edges().count()
    }

    pub fn exterior_count(&self) -> usize {
        self.edges.iter().filter(|e| e.exterior).count()
    }

    /// `|N| - |E| + |F| + 1`, which equals 2 on a connected subdivision.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64 + 1
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &e in &self.node_edges[n] {
                let m = self.edges[e].other(n);
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum::<f64>() / self.edges.len() as f64
    }

    /// Every structural invariant; returns the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_topology()?;
        for (f, face) in self.faces.iter().enumerate() {
            let n = face.nodes.len();
            if n < 3 || face.edges.len() != n {
                return Err(Error::Topology(format!("face {f} cycle is malformed")));
            }
            for k in 0..n {
                let (a, b) = (face.nodes[k], face.nodes[(k + 1) % n]);
                if key(self.edges[face.edges[k]].ends.0, self.edges[face.edges[k]].ends.1) != key(a, b) {
                    return Err(Error::Topology(format!("face {f} cycle is not closed")));
                }
            }
            let mut from_edges: Vec<_> = face.edges.iter().flat_map(|&e| [self.edges[e].ends.0, self.edges[e].ends.1]).collect();
            from_edges.sort_unstable();
            from_edges.dedup();
            let mut nodes = face.nodes.clone();
            nodes.sort_unstable();
            nodes.dedup();
            if nodes != from_edges {
                return Err(Error::Topology(format!("face {f} node set differs from its edge endpoints")));
            }
        }
        for (id, e) in self.edges.iter().enumerate() {
            if e.exterior && !e.road {
                return Err(Error::Topology(format!("exterior edge {id} is not a road")));
            }
            if e.length < 0.0 || e.cost < 0.0 {
                return Err(Error::Topology(format!("edge {id} has negative length or cost")));
            }
        }
        if self.is_connected() && self.euler_characteristic() != 2 {
            return Err(Error::Topology(format!("Euler characteristic is {}", self.euler_characteristic())));
        }
        Ok(())
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.node_edges[a].iter().copied().find(|&e| self.edges[e].other(a) == b)
    }

    pub fn to_document(&self, id: Option<String>) -> GraphDocument {
        GraphDocument {
            id,
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| DocEdge {
                    endpoints: [e.ends.0, e.ends.1],
                    cost: e.cost,
                    length: Some(e.length),
                    road: e.road,
                    exterior: e.exterior,
                    path: (e.path.len() > 2).then(|| e.path.clone()),
                })
                .collect(),
            faces: self.faces.iter().map(|f| DocFace { nodes: f.nodes.clone() }).collect(),
        }
    }
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// Pre-built graph interchange document (`nodes`/`edges`/`faces`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub nodes: Vec<Point>,
    pub edges: Vec<DocEdge>,
    pub faces: Vec<DocFace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocEdge {
    pub endpoints: [NodeId; 2],
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default)]
    pub road: bool,
    #[serde(default)]
    pub exterior: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Point>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocFace {
    pub nodes: Vec<NodeId>,
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<PlanarGraph> {
        let nodes = self.nodes;
        let mut edges = Vec::with_capacity(self.edges.len());
        for (id, d) in self.edges.into_iter().enumerate() {
            let [a, b] = d.endpoints;
            let (pa, pb) = match (nodes.get(a), nodes.get(b)) {
                (Some(&pa), Some(&pb)) => (pa, pb),
                _ => return Err(Error::Parse(format!("edge {id} references a missing node"))),
            };
            let path = d.path.unwrap_or_else(|| vec![pa, pb]);
            let length = d.length.unwrap_or_else(|| path.windows(2).map(|w| w[0].dist(w[1])).sum());
            if !(d.cost.is_finite() && length.is_finite()) {
                return Err(Error::Parse(format!("edge {id} has a non-finite cost or length")));
            }
            edges.push(Edge { ends: (a, b), length, cost: d.cost, road: d.road || d.exterior, exterior: d.exterior, path });
        }
        PlanarGraph::from_parts(nodes, edges, self.faces.into_iter().map(|f| f.nodes).collect())
    }
}

/// Builds the planar graph of a validated slum geometry: polygon vertices
/// become nodes, boundary segments edges, polygons faces.
pub fn build_planar_graph(geometry: &SlumGeometry) -> Result<PlanarGraph> {
    let tol = snap_tolerance(geometry.exterior.iter().chain(geometry.places.iter().flatten()).copied());
    let mut snapper = Snapper::new(tol);

    let mut cycles = Vec::with_capacity(geometry.places.len());
    for ring in &geometry.places {
        let mut cycle: Vec<NodeId> = Vec::with_capacity(ring.len());
        for &p in ring {
            let n = snapper.node(p);
            if cycle.last() != Some(&n) {
                cycle.push(n);
            }
        }
        while cycle.len() > 1 && cycle[0] == cycle[cycle.len() - 1] {
            cycle.pop();
        }
        cycles.push(cycle);
    }
    let exterior: Vec<NodeId> = geometry.exterior.iter().map(|&p| snapper.node(p)).collect();
    let nodes = snapper.points;

    let mut pair: HashMap<(NodeId, NodeId), EdgeId> = HashMap::new();
    let mut edges = Vec::new();
    let mut add_edge = |a: NodeId, b: NodeId, exterior: bool, edges: &mut Vec<Edge>| {
        if a == b {
            return;
        }
        let id = *pair.entry(key(a, b)).or_insert_with(|| {
            let length = nodes[a].dist(nodes[b]);
            edges.push(Edge { ends: (a, b), length, cost: length, road: false, exterior: false, path: vec![nodes[a], nodes[b]] });
            edges.len() - 1
        });
        if exterior {
            edges[id].exterior = true;
            edges[id].road = true;
        }
    };
    for cycle in &cycles {
        for k in 0..cycle.len() {
            add_edge(cycle[k], cycle[(k + 1) % cycle.len()], false, &mut edges);
        }
    }
    for k in 0..exterior.len() {
        add_edge(exterior[k], exterior[(k + 1) % exterior.len()], true, &mut edges);
    }
    PlanarGraph::from_parts(nodes, edges, cycles)
}

struct Snapper {
    tol: f64,
    points: Vec<Point>,
    grid: HashMap<(i64, i64), Vec<NodeId>>,
}

impl Snapper {
    fn new(tol: f64) -> Self {
        Snapper { tol, points: Vec::new(), grid: HashMap::new() }
    }

    fn cell(&self, p: Point) -> (i64, i64) {
        ((p.x / self.tol).floor() as i64, (p.y / self.tol).floor() as i64)
    }

    fn node(&mut self, p: Point) -> NodeId {
        let (cx, cy) = self.cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.grid.get(&(cx + dx, cy + dy)) {
                    if let Some(&id) = ids.iter().find(|&&id| self.points[id].dist(p) <= self.tol) {
                        return id;
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.grid.entry((cx, cy)).or_default().push(id);
        id
    }
}

/// Translates the bounding-box minimum to the origin and rescales so the
/// mean edge length is 1. Costs are rescaled by the same factor.
pub fn normalize(graph: &PlanarGraph) -> PlanarGraph {
    let (lo, _) = bbox(graph.nodes.iter().copied());
    let scale = graph.mean_edge_length();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let map = |p: Point| Point::new((p.x - lo.x) / scale, (p.y - lo.y) / scale);
    let mut out = graph.clone();
    out.nodes.iter_mut().for_each(|p| *p = map(*p));
    for e in &mut out.edges {
        e.length /= scale;
        e.cost /= scale;
        e.path.iter_mut().for_each(|p| *p = map(*p));
    }
    out
}
