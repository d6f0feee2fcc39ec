use serde::{Deserialize, Serialize};

use super::SlumGraph;
use crate::error::{Error, Result};

pub const NODE_FEATURES: usize = 9;
pub const EDGE_FEATURES: usize = 3;
pub const FACE_FEATURES: usize = 3;

/// Row-major feature matrices for one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
    pub face: Vec<f64>,
}

/// Named feature groups and the columns they occupy, as
/// `(name, table, first column, width)`; table 0 = node, 1 = edge, 2 = face.
pub const FEATURE_GROUPS: [(&str, usize, usize, usize); 11] = [
    ("coordinates", 0, 0, 2),
    ("centrality", 0, 2, 4),
    ("on_road", 0, 6, 1),
    ("road_ratio", 0, 7, 1),
    ("avg_n2n", 0, 8, 1),
    ("cost", 1, 0, 1),
    ("road", 1, 1, 1),
    ("straightness", 1, 2, 1),
    ("connected", 2, 0, 1),
    ("avg_f2f", 2, 1, 1),
    ("f2e", 2, 2, 1),
];

/// The |E| x 3 edge table alone.
pub fn edge_features(s: &SlumGraph) -> Vec<f64> {
    let slum = s.slum();
    let g = &slum.graph;
    let sentinel = slum.sentinel;
    let clamp = |d: f64| if d.is_finite() { d.min(sentinel) } else { sentinel };
    let mut edge = Vec::with_capacity(g.edges.len() * EDGE_FEATURES);
    for (id, e) in g.edges.iter().enumerate() {
        let (a, b) = e.ends;
        let straightness = if !(s.on_road(a) && s.on_road(b)) {
            sentinel
        } else if slum.chord[id] > 0.0 {
            clamp(s.distance(a, b) / slum.chord[id])
        } else {
            1.0
        };
        edge.extend_from_slice(&[e.cost, s.is_road(id) as u8 as f64, straightness]);
    }
    edge
}

impl FeatureSet {
    pub fn compute(s: &SlumGraph) -> FeatureSet {
        let slum = s.slum();
        let g = &slum.graph;
        let n = g.nodes.len();
        let sentinel = slum.sentinel;
        let clamp = |d: f64| if d.is_finite() { d.min(sentinel) } else { sentinel };

        let road_nodes: Vec<usize> = (0..n).filter(|&v| s.on_road(v)).collect();
        let mut node = Vec::with_capacity(n * NODE_FEATURES);
        for v in 0..n {
            let p = g.nodes[v];
            let c = slum.centrality[v];
            let incident = &g.node_edges[v];
            let roads = incident.iter().filter(|&&e| s.is_road(e)).count();
            let ratio = if incident.is_empty() { 0.0 } else { roads as f64 / incident.len() as f64 };
            let avg = if !s.on_road(v) {
                sentinel
            } else if road_nodes.len() < 2 {
                0.0
            } else {
                let total: f64 = road_nodes.iter().filter(|&&w| w != v).map(|&w| clamp(s.distance(v, w))).sum();
                total / (road_nodes.len() - 1) as f64
            };
            node.extend_from_slice(&[p.x, p.y, c[0], c[1], c[2], c[3], s.on_road(v) as u8 as f64, ratio, avg]);
        }

        let edge = edge_features(s);

        let nf = g.faces.len();
        let exterior: Vec<usize> = (0..n).filter(|&v| slum.exterior_node[v]).collect();
        let mut face = Vec::with_capacity(nf * FACE_FEATURES);
        for f in 0..nf {
            let connected = s.is_connected(f);
            let avg = if nf < 2 { 0.0 } else { (0..nf).filter(|&o| o != f).map(|o| s.face_distance(f, o)).sum::<f64>() / (nf - 1) as f64 };
            let f2e = if connected {
                let mut best = f64::INFINITY;
                for &a in g.faces[f].nodes.iter().filter(|&&a| s.on_road(a)) {
                    for &x in &exterior {
                        best = best.min(s.distance(a, x));
                    }
                }
                clamp(best)
            } else {
                sentinel
            };
            face.extend_from_slice(&[connected as u8 as f64, avg, f2e]);
        }
        FeatureSet { node, edge, face }
    }

    pub fn node_count(&self) -> usize {
        self.node.len() / NODE_FEATURES
    }

    pub fn edge_count(&self) -> usize {
        self.edge.len() / EDGE_FEATURES
    }

    pub fn face_count(&self) -> usize {
        self.face.len() / FACE_FEATURES
    }

    /// Sets every value of the named feature group to zero.
    pub fn zero_group(&mut self, name: &str) -> Result<()> {
        let &(_, table, start, width) =
            FEATURE_GROUPS.iter().find(|g| g.0 == name).ok_or_else(|| Error::UnknownVariant(format!("no feature named {name}")))?;
        let (data, stride) = match table {
            0 => (&mut self.node, NODE_FEATURES),
            1 => (&mut self.edge, EDGE_FEATURES),
            _ => (&mut self.face, FACE_FEATURES),
        };
        for row in data.chunks_mut(stride) {
            row[start..start + width].iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_planar_graph;
    use crate::harness::generate_synthetic;
    use crate::state::Slum;

    fn fresh(rows: usize, cols: usize) -> SlumGraph {
        let g = build_planar_graph(&generate_synthetic(rows, cols, 0.0, 0).unwrap()).unwrap();
        SlumGraph::new(Slum::new("grid", g).unwrap())
    }

    #[test]
    fn exterior_edge_is_straight_road() {
        let s = fresh(3, 3);
        let f = s.features();
        for (id, e) in s.graph().edges.iter().enumerate() {
            if e.exterior {
                assert_eq!(f.edge[id * 3 + 1], 1.0);
                assert!((f.edge[id * 3 + 2] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_road_node_features() {
        let s = fresh(3, 3);
        let f = s.features();
        let inner: Vec<usize> = (0..s.graph().nodes.len()).filter(|&v| !s.on_road(v)).collect();
        assert_eq!(inner.len(), 4);
        for v in inner {
            let row = &f.node[v * 9..v * 9 + 9];
            assert_eq!((row[6], row[7], row[8]), (0.0, 0.0, s.slum().sentinel));
        }
    }

    #[test]
    fn zeroing_groups() {
        let s = fresh(2, 2);
        let mut f = s.features();
        f.zero_group("centrality").unwrap();
        assert!(f.node.chunks(9).all(|r| r[2..6].iter().all(|&x| x == 0.0)));
        assert!(f.node.chunks(9).any(|r| r[0] != 0.0));
        assert!(matches!(f.zero_group("colour"), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn dimensions() {
        let s = fresh(3, 3);
        let f = s.features();
        assert_eq!((f.node_count(), f.edge_count(), f.face_count()), (16, 24, 9));
    }
}
