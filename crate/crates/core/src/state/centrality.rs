//! Node centralities on the full planar graph (hop metric).
//!
//! Normalizations follow the usual conventions: degree / (n - 1);
//! betweenness over pairs scaled by 2 / ((n - 1)(n - 2)); eigenvector
//! scaled to unit Euclidean norm; closeness (r - 1) / sum of distances,
//! rescaled by (r - 1) / (n - 1) when only r nodes are reachable.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::PlanarGraph;

pub const EIGEN_TOLERANCE: f64 = 1e-8;
pub const EIGEN_MAX_ITER: usize = 1000;

fn adjacency(g: &PlanarGraph) -> Vec<Vec<usize>> {
    (0..g.nodes.len())
        .map(|n| {
            let mut adj: Vec<usize> = g.node_edges[n].iter().map(|&e| g.edges[e].other(n)).collect();
            adj.sort_unstable();
            adj.dedup();
            adj
        })
        .collect()
}

/// `[degree, betweenness, eigenvector, closeness]` per node.
pub fn centralities(g: &PlanarGraph) -> Result<Vec<[f64; 4]>> {
    let adj = adjacency(g);
    let degree = degree_centrality(&adj);
    let betweenness = betweenness_centrality(&adj);
    let eigen = eigenvector_centrality(&adj)?;
    let closeness = closeness_centrality(&adj);
    Ok((0..adj.len()).map(|i| [degree[i], betweenness[i], eigen[i], closeness[i]]).collect())
}

fn degree_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    if n <= 1 {
        return vec![1.0; n];
    }
    adj.iter().map(|a| a.len() as f64 / (n - 1) as f64).collect()
}

/// Brandes' accumulation over unweighted shortest paths.
fn betweenness_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = -1);
        delta.iter_mut().for_each(|x| *x = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // every unordered pair was counted from both ends
    let scale = if n > 2 { 1.0 / ((n - 1) * (n - 2)) as f64 } else { 0.5 };
    cb.iter().map(|x| x * scale).collect()
}

/// Power iteration on `A + I` (the shift keeps bipartite graphs from
/// oscillating; it leaves the leading eigenvector unchanged).
fn eigenvector_centrality(adj: &[Vec<usize>]) -> Result<Vec<f64>> {
    let n = adj.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..EIGEN_MAX_ITER {
        let mut next = x.clone();
        for (v, nbrs) in adj.iter().enumerate() {
            for &w in nbrs {
                next[v] += x[w];
            }
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Convergence(0));
        }
        next.iter_mut().for_each(|v| *v /= norm);
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if change < n as f64 * EIGEN_TOLERANCE {
            return Ok(x);
        }
    }
    Err(Error::Convergence(EIGEN_MAX_ITER))
}

fn closeness_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut out = vec![0.0; n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        let (mut total, mut reached) = (0usize, 1usize);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    total += dist[w];
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if total > 0 && n > 1 {
            let r = (reached - 1) as f64;
            out[s] = r / total as f64 * (r / (n - 1) as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Vec<Vec<usize>> {
        vec![vec![1], vec![0, 2], vec![1]]
    }

    #[test]
    fn triangle_degree_is_one() {
        let adj = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        assert_eq!(degree_centrality(&adj), vec![1.0; 3]);
        let eig = eigenvector_centrality(&adj).unwrap();
        for v in eig {
            assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn path_betweenness() {
        assert_eq!(betweenness_centrality(&path3()), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn path_closeness() {
        let c = closeness_centrality(&path3());
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[1], 1.0);
    }
}
