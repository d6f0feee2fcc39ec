use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{solution_space_log10, EdgeId};
use crate::state::{Slum, SlumGraph};

pub const ORACLE_LIMIT: f64 = 1e7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub budget: usize,
    /// Fewest planned segments giving universal connectivity with the
    /// plan joined to the exterior; `None` if no subset within the budget
    /// achieves it.
    pub min_nr: Option<usize>,
    pub min_nr_subsets: Vec<Vec<EdgeId>>,
    /// Smallest AD over joined subsets of exactly `budget` segments.
    pub min_ad: Option<f64>,
    pub min_ad_subsets: Vec<Vec<EdgeId>>,
    pub evaluated: u64,
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    idx: Vec<usize>,
    n: usize,
    first: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { idx: (0..k).collect(), n, first: true }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let k = self.idx.len();
        if k > self.n {
            return None;
        }
        if self.first {
            self.first = false;
            return Some(self.idx.clone());
        }
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
        None
    }
}

struct Eval {
    joined: bool,
    universal: bool,
    ad: f64,
}

fn evaluate(slum: &Arc<Slum>, edges: &[EdgeId]) -> Result<Eval> {
    let mut s = SlumGraph::new(Arc::clone(slum));
    for &e in edges {
        s.set_road(e)?;
    }
    let g = &slum.graph;
    let joined = edges.iter().all(|&e| s.on_road(g.edges[e].ends.0) && s.on_road(g.edges[e].ends.1));
    Ok(Eval { joined, universal: s.all_connected(), ad: s.average_face_distance() })
}

const CHUNK: usize = 4096;

/// Scans all k-subsets, calling `f` on chunks evaluated in parallel.
fn scan(slum: &Arc<Slum>, k: usize, mut f: impl FnMut(&[EdgeId], &Eval)) -> Result<u64> {
    let cands = &slum.candidates;
    let mut combos = Combinations::new(cands.len(), k);
    let mut count = 0u64;
    loop {
        let chunk: Vec<Vec<EdgeId>> = combos.by_ref().take(CHUNK).map(|c| c.iter().map(|&i| cands[i]).collect()).collect();
        if chunk.is_empty() {
            break;
        }
        let evals: Vec<Eval> = chunk.par_iter().map(|s| evaluate(slum, s)).collect::<Result<_>>()?;
        for (s, e) in chunk.iter().zip(&evals) {
            f(s, e);
        }
        count += chunk.len() as u64;
    }
    Ok(count)
}

/// Exhaustive search over candidate subsets whose union with the exterior
/// is connected.
pub fn brute_force_oracle(slum: &Arc<Slum>, budget: usize) -> Result<OracleResult> {
    let n = slum.candidates.len();
    if budget > n {
        return Err(Error::Domain(format!("budget {budget} exceeds {n} candidates")));
    }
    let log = solution_space_log10(n as u64, budget as u64)?;
    if log > ORACLE_LIMIT.log10() {
        return Err(Error::TooLarge(format!("C({n}, {budget}) = 10^{log:.2} subsets exceeds the oracle limit")));
    }
    let mut evaluated = 0;
    let mut min_nr = None;
    let mut min_nr_subsets = Vec::new();
    for j in 0..=budget {
        evaluated += scan(slum, j, |s, e| {
            if e.joined && e.universal {
                min_nr_subsets.push(s.to_vec());
            }
        })?;
        if !min_nr_subsets.is_empty() {
            min_nr = Some(j);
            break;
        }
    }
    let mut min_ad: Option<f64> = None;
    let mut min_ad_subsets = Vec::new();
    evaluated += scan(slum, budget, |s, e| {
        if !e.joined {
            return;
        }
        match min_ad {
            Some(best) if e.ad > best => {}
            Some(best) if e.ad == best => min_ad_subsets.push(s.to_vec()),
            _ => {
                min_ad = Some(e.ad);
                min_ad_subsets = vec![s.to_vec()];
            }
        }
    })?;
    Ok(OracleResult { budget, min_nr, min_nr_subsets, min_ad, min_ad_subsets, evaluated })
}
