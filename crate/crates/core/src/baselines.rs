//! Comparison planners run under the same environment and metrics as the
//! learned policy.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{BudgetMode, Env, EnvConfig, Stage};
use crate::error::{Error, Result};
use crate::geometry::{EdgeId, FaceId, NodeId};
use crate::plan::{argmax_masked, report_edge_sequence, run_episode, PlanReport};
use crate::state::{dijkstra, edge_features, Slum, SlumGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    GreedyA,
    GreedyC,
    Mst,
    GaGenerative,
    GaSwap,
    HsMc,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::Random,
        BaselineKind::GreedyA,
        BaselineKind::GreedyC,
        BaselineKind::Mst,
        BaselineKind::GaGenerative,
        BaselineKind::GaSwap,
        BaselineKind::HsMc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::GreedyA => "greedy_a",
            BaselineKind::GreedyC => "greedy_c",
            BaselineKind::Mst => "mst",
            BaselineKind::GaGenerative => "ga_generative",
            BaselineKind::GaSwap => "ga_swap",
            BaselineKind::HsMc => "hs_mc",
        }
    }

    pub fn parse(name: &str) -> Result<BaselineKind> {
        BaselineKind::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| Error::UnknownVariant(format!("no baseline named {name}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub masked: bool,
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub elitism: usize,
    pub tournament: usize,
    pub samples: usize,
    /// Weights on the NR, AD and SC terms of the GA fitness.
    pub fitness_weights: [f64; 3],
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            kind: BaselineKind::Random,
            masked: true,
            seed: 0,
            population: 50,
            generations: 200,
            mutation_rate: 0.1,
            mutation_sigma: 0.5,
            elitism: 1,
            tournament: 3,
            samples: 100,
            fitness_weights: [10.0, 1.0, 1.0],
        }
    }
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec { kind, ..Self::default() }
    }

    pub fn planner_id(&self) -> String {
        match (self.kind, self.masked) {
            (BaselineKind::GaSwap | BaselineKind::HsMc, _) | (_, true) => self.kind.name().to_owned(),
            (_, false) => format!("{}_unmasked", self.kind.name()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind == BaselineKind::GreedyA && !self.masked {
            return Err(Error::Config("greedy_a is only defined with the mask".into()));
        }
        if matches!(self.kind, BaselineKind::GaGenerative | BaselineKind::GaSwap) {
            if self.population == 0 || self.tournament == 0 {
                return Err(Error::Config("population and tournament size must be positive".into()));
            }
            if self.elitism > self.population {
                return Err(Error::Config("elitism exceeds the population".into()));
            }
            if !(0.0..=1.0).contains(&self.mutation_rate) {
                return Err(Error::Config("mutation_rate must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

pub fn run_baseline(slum: &Arc<Slum>, env_cfg: &EnvConfig, spec: &BaselineSpec) -> Result<PlanReport> {
    spec.validate()?;
    let id = spec.planner_id();
    let cfg = EnvConfig { masking: spec.masked, ..env_cfg.clone() };
    match spec.kind {
        BaselineKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            run_episode(slum, &cfg, &id, |env| {
                let scores: Vec<f64> = (0..env.mask().len()).map(|_| rng.random()).collect();
                argmax_masked(&scores, env.mask()).map(Some)
            })
        }
        BaselineKind::GreedyA => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            run_episode(slum, &cfg, &id, |env| greedy_a_choice(env, &mut rng).map(Some))
        }
        BaselineKind::GreedyC => run_episode(slum, &cfg, &id, |env| argmax_masked(&greedy_c_scores(env.state()), env.mask()).map(Some)),
        BaselineKind::Mst => mst_plan(slum, &cfg, &id),
        BaselineKind::GaGenerative => ga_generative(slum, &cfg, spec).map(|(r, _)| r),
        BaselineKind::GaSwap => ga_swap(slum, env_cfg, spec).map(|(r, _)| r),
        BaselineKind::HsMc => hs_mc(slum, env_cfg, spec.samples, spec.seed, &id),
    }
}

/// Indicator scores: 1 on the edge reaching the most unconnected places
/// from the road network, 0 elsewhere.
pub fn greedy_a_scores(env: &Env) -> Vec<f64> {
    let counts: Vec<f64> = (0..env.mask().len()).map(|e| env.far_count(e).unwrap_or(0) as f64).collect();
    indicator(&counts, env.mask())
}

/// After universal connectivity Greedy-A picks uniformly among allowed
/// edges.
fn greedy_a_choice(env: &Env, rng: &mut impl Rng) -> Result<EdgeId> {
    if env.stage() == Stage::StageII {
        let allowed: Vec<EdgeId> = (0..env.mask().len()).filter(|&e| env.mask()[e]).collect();
        return allowed.choose(rng).copied().ok_or(Error::EmptyMask);
    }
    argmax_masked(&greedy_a_scores(env), env.mask())
}

/// Negative cost per edge; the argmax is the cheapest edge.
pub fn greedy_c_scores(s: &SlumGraph) -> Vec<f64> {
    s.graph().edges.iter().map(|e| -e.cost).collect()
}

fn indicator(values: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    if let Ok(i) = argmax_masked(values, mask) {
        out[i] = 1.0;
    }
    out
}

/// Union-find with path halving; `union` keeps the smaller root.
pub struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// A weighted edge of the place graph; `segment` is `None` for the free
/// links joining already connected places to the road network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaceLink {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub segment: Option<EdgeId>,
}

/// Places are nodes `0..|F|`; node `|F|` is the existing road network.
/// Each candidate segment links the places it separates (or a place and
/// the network when it lies on the outer boundary).
pub fn place_graph(slum: &Arc<Slum>) -> Vec<PlaceLink> {
    let g = &slum.graph;
    let root = g.faces.len();
    let fresh = SlumGraph::new(Arc::clone(slum));
    let mut links: Vec<PlaceLink> =
        (0..root).filter(|&f| fresh.is_connected(f)).map(|f| PlaceLink { a: f, b: root, weight: 0.0, segment: None }).collect();
    for &e in &slum.candidates {
        let faces = &g.edge_faces[e];
        let (a, b) = match faces.as_slice() {
            [a, b] => (*a, *b),
            [a] => (*a, root),
            _ => continue,
        };
        links.push(PlaceLink { a, b, weight: g.edges[e].cost, segment: Some(e) });
    }
    links
}

/// Kruskal over the place graph; returns accepted links in acceptance
/// order (ties: free links first, then by segment id).
pub fn kruskal(n: usize, links: &[PlaceLink]) -> Vec<PlaceLink> {
    let mut order: Vec<&PlaceLink> = links.iter().collect();
    order.sort_by(|x, y| x.weight.total_cmp(&y.weight).then_with(|| x.segment.map_or(0, |s| s + 1).cmp(&y.segment.map_or(0, |s| s + 1))));
    let mut sets = DisjointSets::new(n);
    order.into_iter().filter(|l| sets.union(l.a, l.b)).copied().collect()
}

/// Segments of the minimum spanning tree of the place graph, in
/// acceptance order.
pub fn mst_segments(slum: &Arc<Slum>) -> Result<Vec<EdgeId>> {
    let root = slum.face_count();
    let accepted = kruskal(root + 1, &place_graph(slum));
    let mut sets = DisjointSets::new(root + 1);
    for l in &accepted {
        sets.union(l.a, l.b);
    }
    if let Some(f) = (0..root).find(|&f| sets.find(f) != sets.find(root)) {
        return Err(Error::Disconnected(f));
    }
    Ok(accepted.iter().filter_map(|l| l.segment).collect())
}

fn mst_plan(slum: &Arc<Slum>, cfg: &EnvConfig, id: &str) -> Result<PlanReport> {
    let segments = mst_segments(slum)?;
    if !cfg.masking {
        return report_edge_sequence(slum, cfg, id, &segments);
    }
    // Under the mask: take the next tree segment that is allowed; when none
    // is, extend the network toward a pending one along its cheapest
    // allowed neighbor.
    let g = &slum.graph;
    run_episode(slum, cfg, id, |env| {
        let pending: Vec<EdgeId> = segments.iter().copied().filter(|&e| !env.state().is_road(e)).collect();
        if pending.is_empty() {
            return Ok(None);
        }
        if let Some(&e) = pending.iter().find(|&&e| env.mask()[e]) {
            return Ok(Some(e));
        }
        let touches_pending = |e: EdgeId| {
            let (a, b) = g.edges[e].ends;
            pending.iter().any(|&p| {
                let (x, y) = g.edges[p].ends;
                a == x || a == y || b == x || b == y
            })
        };
        let scores: Vec<f64> = (0..g.edges.len()).map(|e| if touches_pending(e) { -g.edges[e].cost } else { f64::NEG_INFINITY }).collect();
        let i = argmax_masked(&scores, env.mask())?;
        if scores[i] == f64::NEG_INFINITY {
            return argmax_masked(&greedy_c_scores(env.state()), env.mask()).map(Some);
        }
        Ok(Some(i))
    })
}

/// Normalized weighted plan cost used as (negated) GA fitness: NR as a
/// fraction of the steps taken (1 plus the unconnected share when
/// universal connectivity is never reached), AD over the sentinel, SC over
/// the total candidate cost.
pub fn plan_fitness(report: &PlanReport, slum: &Slum, weights: [f64; 3]) -> f64 {
    let steps = report.steps.len().max(1) as f64;
    let nr_term = match report.nr {
        Some(nr) => nr as f64 / steps,
        None => {
            let last = report.steps.last().map_or(0, |s| s.connected);
            1.0 + (slum.face_count() - last) as f64 / slum.face_count() as f64
        }
    };
    let total = slum.total_candidate_cost().max(f64::MIN_POSITIVE);
    -(weights[0] * nr_term + weights[1] * report.ad / slum.sentinel + weights[2] * report.sc / total)
}

/// Greedy rollout scoring each edge by `gene . A_e`.
pub fn gene_rollout(slum: &Arc<Slum>, cfg: &EnvConfig, gene: &[f64; 3], id: &str) -> Result<PlanReport> {
    run_episode(slum, cfg, id, |env| {
        let a = edge_features(env.state());
        let scores: Vec<f64> = a.chunks(3).map(|r| gene[0] * r[0] + gene[1] * r[1] + gene[2] * r[2]).collect();
        argmax_masked(&scores, env.mask()).map(Some)
    })
}

fn tournament<'a, T>(pop: &'a [(T, f64)], size: usize, rng: &mut impl Rng) -> &'a T {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let c = rng.random_range(0..pop.len());
        if pop[c].1 > pop[best].1 {
            best = c;
        }
    }
    &pop[best].0
}

/// Sorts by fitness, best first; ties keep the earlier member.
fn rank<T>(pop: &mut [(T, f64)]) {
    pop.sort_by(|a, b| b.1.total_cmp(&a.1));
}

/// Evolves score-weight genes; returns the best plan and the best fitness
/// of every generation.
pub fn ga_generative(slum: &Arc<Slum>, cfg: &EnvConfig, spec: &BaselineSpec) -> Result<(PlanReport, Vec<f64>)> {
    spec.validate()?;
    let id = spec.planner_id();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, spec.mutation_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let evaluate = |genes: Vec<[f64; 3]>| -> Result<Vec<([f64; 3], f64)>> {
        genes.into_par_iter().map(|g| gene_rollout(slum, cfg, &g, &id).map(|r| (g, plan_fitness(&r, slum, spec.fitness_weights)))).collect()
    };
    let initial: Vec<[f64; 3]> = (0..spec.population).map(|_| std::array::from_fn(|_| normal.sample(&mut rng))).collect();
    let mut pop = evaluate(initial)?;
    rank(&mut pop);
    let mut history = vec![pop[0].1];
    for _ in 0..spec.generations {
        let mut next: Vec<[f64; 3]> = pop.iter().take(spec.elitism).map(|p| p.0).collect();
        while next.len() < spec.population {
            let a = *tournament(&pop, spec.tournament, &mut rng);
            let b = *tournament(&pop, spec.tournament, &mut rng);
            let mut child: [f64; 3] = std::array::from_fn(|i| if rng.random::<bool>() { a[i] } else { b[i] });
            for c in &mut child {
                if rng.random::<f64>() < spec.mutation_rate {
                    *c += noise.sample(&mut rng);
                }
            }
            next.push(child);
        }
        // elites keep their fitness; only children are re-evaluated
        let elites: Vec<([f64; 3], f64)> = pop.iter().take(spec.elitism).copied().collect();
        let children = evaluate(next.split_off(spec.elitism))?;
        pop = elites.into_iter().chain(children).collect();
        rank(&mut pop);
        history.push(pop[0].1);
    }
    let best = gene_rollout(slum, cfg, &pop[0].0, &id)?;
    Ok((best, history))
}

/// Orders an edge set so that it grows from the road network, preferring
/// edges that reach the most unconnected places; detached edges come last
/// in id order.
pub fn order_edge_set(slum: &Arc<Slum>, edges: &[EdgeId]) -> Result<Vec<EdgeId>> {
    let mut state = SlumGraph::new(Arc::clone(slum));
    let g = &slum.graph;
    let mut rest: Vec<EdgeId> = edges.to_vec();
    rest.sort_unstable();
    let mut out = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (i, &e) in rest.iter().enumerate() {
            let (a, b) = g.edges[e].ends;
            let count = |near: NodeId, far: NodeId| state.on_road(near).then(|| state.unconnected_faces_at(far));
            let c = match (count(a, b), count(b, a)) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            };
            if let Some(c) = c {
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((i, c));
                }
            }
        }
        let i = best.map_or(0, |(i, _)| i);
        let e = rest.remove(i);
        state.set_road(e)?;
        out.push(e);
    }
    Ok(out)
}

fn swap_fitness(slum: &Arc<Slum>, cfg: &EnvConfig, genome: &[EdgeId], spec: &BaselineSpec, id: &str) -> Result<(PlanReport, f64)> {
    let order = order_edge_set(slum, genome)?;
    let report = report_edge_sequence(slum, cfg, id, &order)?;
    let mut state = SlumGraph::new(Arc::clone(slum));
    for &e in genome {
        state.set_road(e)?;
    }
    let g = &slum.graph;
    let detached = genome.iter().filter(|&&e| !state.on_road(g.edges[e].ends.0)).count();
    let fitness = plan_fitness(&report, slum, spec.fitness_weights) - 100.0 * detached as f64;
    Ok((report, fitness))
}

/// Fixed-weight subset evolution. Genomes are sorted lists of exactly
/// `K` candidate edges.
pub fn ga_swap(slum: &Arc<Slum>, env_cfg: &EnvConfig, spec: &BaselineSpec) -> Result<(PlanReport, Vec<f64>)> {
    spec.validate()?;
    if env_cfg.budget_mode != BudgetMode::SegmentCount {
        return Err(Error::Config("ga_swap needs a segment-count budget".into()));
    }
    let id = spec.planner_id();
    let k = env_cfg.resolve_budget(slum)? as usize;
    let cands = &slum.candidates;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let random_genome = |rng: &mut ChaCha8Rng| {
        let mut g: Vec<EdgeId> = cands.choose_multiple(rng, k).copied().collect();
        g.sort_unstable();
        g
    };
    let evaluate = |genomes: Vec<Vec<EdgeId>>| -> Result<Vec<(Vec<EdgeId>, f64)>> {
        genomes.into_par_iter().map(|g| swap_fitness(slum, env_cfg, &g, spec, &id).map(|(_, f)| (g, f))).collect()
    };
    let initial: Vec<Vec<EdgeId>> = (0..spec.population).map(|_| random_genome(&mut rng)).collect();
    let mut pop = evaluate(initial)?;
    rank(&mut pop);
    let mut history = vec![pop[0].1];
    for _ in 0..spec.generations {
        let elites: Vec<(Vec<EdgeId>, f64)> = pop.iter().take(spec.elitism).cloned().collect();
        let mut children = Vec::with_capacity(spec.population - elites.len());
        while children.len() + elites.len() < spec.population {
            let a = tournament(&pop, spec.tournament, &mut rng);
            let b = tournament(&pop, spec.tournament, &mut rng);
            let mut child = crossover(a, b, k, &mut rng);
            if rng.random::<f64>() < spec.mutation_rate {
                swap_mutation(&mut child, cands, &mut rng);
            }
            children.push(child);
        }
        pop = elites.into_iter().chain(evaluate(children)?).collect();
        rank(&mut pop);
        history.push(pop[0].1);
    }
    let (report, _) = swap_fitness(slum, env_cfg, &pop[0].0, spec, &id)?;
    Ok((report, history))
}

/// Keeps the edges both parents share and fills up to `k` from the rest
/// of their union.
pub fn crossover(a: &[EdgeId], b: &[EdgeId], k: usize, rng: &mut impl Rng) -> Vec<EdgeId> {
    let mut child: Vec<EdgeId> = a.iter().copied().filter(|e| b.contains(e)).collect();
    let mut pool: Vec<EdgeId> = a.iter().chain(b).copied().filter(|e| !child.contains(e)).collect();
    pool.sort_unstable();
    pool.dedup();
    pool.shuffle(rng);
    child.extend(pool.into_iter().take(k - child.len()));
    child.sort_unstable();
    child
}

/// Replaces one selected edge with one unselected candidate.
pub fn swap_mutation(genome: &mut [EdgeId], candidates: &[EdgeId], rng: &mut impl Rng) {
    let outside: Vec<EdgeId> = candidates.iter().copied().filter(|e| !genome.contains(e)).collect();
    if genome.is_empty() || outside.is_empty() {
        return;
    }
    let i = rng.random_range(0..genome.len());
    genome[i] = *outside.choose(rng).expect("non-empty");
    genome.sort_unstable();
}

/// Minimum full-graph distance from the road network to each face.
fn face_remoteness(state: &SlumGraph) -> Vec<f64> {
    let g = state.graph();
    let all = vec![true; g.edges.len()];
    let n = g.nodes.len();
    // multi-source search from every road node at once
    let mut best = vec![f64::INFINITY; n];
    for v in (0..n).filter(|&v| state.on_road(v)) {
        if best[v] == 0.0 {
            continue;
        }
        let d = dijkstra(g, &all, v);
        best.iter_mut().zip(&d).for_each(|(b, x)| *b = b.min(*x));
    }
    g.faces.iter().map(|f| f.nodes.iter().map(|&v| best[v]).fold(f64::INFINITY, f64::min)).collect()
}

fn pick_target(state: &SlumGraph) -> Option<FaceId> {
    let nf = state.slum().face_count();
    let (scores, allowed): (Vec<f64>, Vec<bool>) = if !state.all_connected() {
        let r = face_remoteness(state);
        (r, (0..nf).map(|f| !state.is_connected(f)).collect())
    } else {
        let avg: Vec<f64> = (0..nf).map(|f| (0..nf).filter(|&o| o != f).map(|o| state.face_distance(f, o)).sum::<f64>()).collect();
        (avg, vec![true; nf])
    };
    argmax_masked(&scores, &allowed).ok()
}

/// Self-avoiding random walk over non-road edges from a road node until it
/// reaches `target`; `None` on a dead end.
fn sample_path(state: &SlumGraph, starts: &[NodeId], target: &[bool], rng: &mut impl Rng) -> Option<Vec<EdgeId>> {
    let g = state.graph();
    let mut at = *starts.choose(rng)?;
    let mut visited = vec![false; g.nodes.len()];
    visited[at] = true;
    let mut path = Vec::new();
    loop {
        let options: Vec<EdgeId> = g.node_edges[at].iter().copied().filter(|&e| !state.is_road(e) && !visited[g.edges[e].other(at)]).collect();
        let &e = options.choose(rng)?;
        path.push(e);
        at = g.edges[e].other(at);
        if target[at] {
            return Some(path);
        }
        visited[at] = true;
    }
}

/// Cheapest path over non-road edges from any road node outside `target`
/// to a node of `target`.
fn shortest_path(state: &SlumGraph, starts: &[NodeId], target: &[bool]) -> Option<Vec<EdgeId>> {
    let g = state.graph();
    let n = g.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<EdgeId>> = vec![None; n];
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    for &s in starts {
        dist[s] = 0.0;
        queue.push_back(s);
    }
    // label-correcting search; graphs are small
    while let Some(v) = queue.pop_front() {
        if target[v] && via[v].is_some() {
            continue;
        }
        for &e in &g.node_edges[v] {
            if state.is_road(e) {
                continue;
            }
            let w = g.edges[e].other(v);
            let nd = dist[v] + g.edges[e].cost;
            if nd < dist[w] {
                dist[w] = nd;
                via[w] = Some(e);
                queue.push_back(w);
            }
        }
    }
    let end = (0..n).filter(|&v| target[v] && via[v].is_some()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
    let mut path = Vec::new();
    let mut at = end;
    while let Some(e) = via[at] {
        path.push(e);
        at = g.edges[e].other(at);
    }
    path.reverse();
    Some(path)
}

fn path_cost(state: &SlumGraph, path: &[EdgeId]) -> f64 {
    path.iter().map(|&e| state.graph().edges[e].cost).sum()
}

/// Repeatedly joins the least connected place to the road network with
/// the cheapest of `samples` sampled paths.
pub fn hs_mc(slum: &Arc<Slum>, env_cfg: &EnvConfig, samples: usize, seed: u64, id: &str) -> Result<PlanReport> {
    let cfg = EnvConfig { masking: false, ..env_cfg.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: VecDeque<EdgeId> = VecDeque::new();
    let g = &slum.graph;
    run_episode(slum, &cfg, id, |env| {
        if queue.is_empty() {
            let state = env.state();
            let Some(target_face) = pick_target(state) else { return Ok(None) };
            let mut target = vec![false; g.nodes.len()];
            for &v in &g.faces[target_face].nodes {
                target[v] = true;
            }
            let starts: Vec<NodeId> =
                (0..g.nodes.len()).filter(|&v| state.on_road(v) && !target[v] && g.node_edges[v].iter().any(|&e| !state.is_road(e))).collect();
            let mut best: Option<Vec<EdgeId>> = None;
            for _ in 0..samples {
                if let Some(p) = sample_path(state, &starts, &target, &mut rng) {
                    if best.as_ref().is_none_or(|b| path_cost(state, &p) < path_cost(state, b)) {
                        best = Some(p);
                    }
                }
            }
            let path = match best.or_else(|| shortest_path(state, &starts, &target)) {
                Some(p) => p,
                None if env.stage() == Stage::StageI => return Err(Error::Deadlock(state.unconnected_count())),
                None => return Ok(None),
            };
            queue.extend(path);
        }
        let e = queue.pop_front().expect("non-empty");
        if !env.mask()[e] {
            // unaffordable under a cost budget
            return Ok(None);
        }
        Ok(Some(e))
    })
}
