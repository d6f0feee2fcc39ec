use std::collections::HashMap;

use super::planar::{Edge, EdgeId, NodeId, PlanarGraph};
use crate::error::{Error, Result};

/// Links a simplified graph back to the graph it was derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplifyMap {
    /// Original node -> simplified node (`None` for removed degree-2 nodes).
    pub node_of: Vec<Option<NodeId>>,
    /// Simplified edge -> original edges, ordered along its polyline.
    pub edges_of: Vec<Vec<EdgeId>>,
}

impl SimplifyMap {
    /// Projects a plan on the simplified graph onto the original edge ids.
    pub fn project(&self, plan: &[EdgeId]) -> Vec<EdgeId> {
        plan.iter().flat_map(|&e| self.edges_of[e].iter().copied()).collect()
    }
}

/// Default node merge threshold: 2% of the mean edge length.
pub fn default_merge_eps(graph: &PlanarGraph) -> f64 {
    0.02 * graph.mean_edge_length()
}

struct WorkEdge {
    edge: Edge,
    orig: Vec<EdgeId>,
    alive: bool,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// Merges nodes closer than `merge_eps`, collapses duplicate edges and
/// removes degree-2 nodes (summing the costs of the two merged edges).
pub fn simplify(graph: &PlanarGraph, merge_eps: f64) -> Result<(PlanarGraph, SimplifyMap)> {
    let n = graph.nodes.len();

    // Cluster nearby nodes; every cluster takes its lowest id's position.
    let mut parent: Vec<NodeId> = (0..n).collect();
    fn find(parent: &mut [NodeId], mut x: NodeId) -> NodeId {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if graph.nodes[a].dist(graph.nodes[b]) < merge_eps {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let rep: Vec<NodeId> = (0..n).map(|a| find(&mut parent, a)).collect();
    let pos = graph.nodes.clone();
    let mut alive_node: Vec<bool> = (0..n).map(|a| rep[a] == a).collect();

    // Rewire edges, dropping collapsed ones and folding parallel duplicates
    // into the lowest id.
    let mut edges: Vec<WorkEdge> = Vec::with_capacity(graph.edges.len());
    let mut by_pair: HashMap<(NodeId, NodeId), EdgeId> = HashMap::new();
    for (id, e) in graph.edges.iter().enumerate() {
        let (a, b) = (rep[e.ends.0], rep[e.ends.1]);
        let mut edge = e.clone();
        edge.ends = (a, b);
        if let Some(first) = edge.path.first_mut() {
            *first = pos[a];
        }
        if let Some(last) = edge.path.last_mut() {
            *last = pos[b];
        }
        if a == b {
            edges.push(WorkEdge { edge, orig: vec![id], alive: false });
            continue;
        }
        match by_pair.get(&key(a, b)) {
            Some(&keep) => {
                // the duplicate's cost is dropped
                let kept = &mut edges[keep].edge;
                kept.road |= edge.road;
                kept.exterior |= edge.exterior;
                edges.push(WorkEdge { edge, orig: vec![id], alive: false });
            }
            None => {
                by_pair.insert(key(a, b), id);
                edges.push(WorkEdge { edge, orig: vec![id], alive: true });
            }
        }
    }

    let mut cycles: Vec<Vec<NodeId>> = Vec::with_capacity(graph.faces.len());
    for (f, face) in graph.faces.iter().enumerate() {
        let mut cycle: Vec<NodeId> = Vec::with_capacity(face.nodes.len());
        for &v in &face.nodes {
            let r = rep[v];
            if cycle.last() != Some(&r) {
                cycle.push(r);
            }
        }
        while cycle.len() > 1 && cycle[0] == cycle[cycle.len() - 1] {
            cycle.pop();
        }
        let mut distinct = cycle.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::Topology(format!("merging nodes collapses face {f} to zero area")));
        }
        cycles.push(cycle);
    }

    // Remove degree-2 nodes until none can be removed.
    let mut incident: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
    for (id, w) in edges.iter().enumerate().filter(|(_, w)| w.alive) {
        incident[w.edge.ends.0].push(id);
        incident[w.edge.ends.1].push(id);
    }
    loop {
        let mut changed = false;
        for v in 0..n {
            if !alive_node[v] || incident[v].len() != 2 {
                continue;
            }
            let (e1, e2) = (incident[v][0].min(incident[v][1]), incident[v][0].max(incident[v][1]));
            let (u, w) = (edges[e1].edge.other(v), edges[e2].edge.other(v));
            let (a, b) = (&edges[e1].edge, &edges[e2].edge);
            if u == w || a.road != b.road || a.exterior != b.exterior || by_pair.contains_key(&key(u, w)) {
                continue;
            }
            // New polyline u -> v -> w.
            let mut first = edges[e1].edge.path.clone();
            if edges[e1].edge.ends.0 == v {
                first.reverse();
            }
            let mut second = edges[e2].edge.path.clone();
            if edges[e2].edge.ends.1 == v {
                second.reverse();
            }
            first.extend(second.into_iter().skip(1));
            let mut orig = edges[e1].orig.clone();
            if edges[e1].edge.ends.0 == v {
                orig.reverse();
            }
            let mut tail = edges[e2].orig.clone();
            if edges[e2].edge.ends.1 == v {
                tail.reverse();
            }
            orig.extend(tail);

            let merged = Edge {
                ends: (u, w),
                length: edges[e1].edge.length + edges[e2].edge.length,
                cost: edges[e1].edge.cost + edges[e2].edge.cost,
                road: edges[e1].edge.road,
                exterior: edges[e1].edge.exterior,
                path: first,
            };
            by_pair.remove(&key(u, v));
            by_pair.remove(&key(v, w));
            by_pair.insert(key(u, w), e1);
            edges[e1] = WorkEdge { edge: merged, orig, alive: true };
            edges[e2].alive = false;
            incident[v].clear();
            incident[w].retain(|&e| e != e2);
            incident[w].push(e1);
            alive_node[v] = false;
            for cycle in &mut cycles {
                cycle.retain(|&x| x != v);
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }

    // Compact ids, preserving relative order.
    let mut node_new = vec![None; n];
    let mut nodes = Vec::new();
    for v in (0..n).filter(|&v| alive_node[v]) {
        node_new[v] = Some(nodes.len());
        nodes.push(pos[v]);
    }
    let mut out_edges = Vec::new();
    let mut edges_of = Vec::new();
    for w in edges.iter().filter(|w| w.alive) {
        let mut e = w.edge.clone();
        e.ends = (node_new[e.ends.0].expect("live edge on live node"), node_new[e.ends.1].expect("live edge on live node"));
        out_edges.push(e);
        edges_of.push(w.orig.clone());
    }
    let cycles = cycles.into_iter().map(|c| c.into_iter().map(|v| node_new[v].expect("face node alive")).collect()).collect();
    let simplified = PlanarGraph::from_parts(nodes, out_edges, cycles)?;
    let node_of = (0..n).map(|v| if alive_node[rep[v]] { node_new[rep[v]] } else { None }).collect();
    Ok((simplified, SimplifyMap { node_of, edges_of }))
}
