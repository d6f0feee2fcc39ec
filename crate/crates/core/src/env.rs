//! The two-stage masked planning environment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EdgeId;
use crate::state::{Slum, SlumGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Connect every place to the road network.
    StageI,
    /// Shorten travel between places.
    StageII,
}

impl Stage {
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Stage::StageI => [1.0, 0.0],
            Stage::StageII => [0.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    SegmentCount,
    ConstructionCost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DNormalization {
    MeanPairs,
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub budget_mode: BudgetMode,
    /// Segment count or cost; when absent, `budget_fraction` of the
    /// candidate count (rounded up) or of the total candidate cost.
    pub budget: Option<f64>,
    pub budget_fraction: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub relax_deadlock: bool,
    pub d_normalization: DNormalization,
    /// When false every non-road edge is selectable.
    pub masking: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            budget_mode: BudgetMode::SegmentCount,
            budget: None,
            budget_fraction: 0.5,
            alpha1: 1.0,
            alpha2: -0.5,
            relax_deadlock: true,
            d_normalization: DNormalization::MeanPairs,
            masking: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0) {
            return Err(Error::Config("alpha1 must be positive".into()));
        }
        if !(self.alpha2 <= 0.0) {
            return Err(Error::Config("alpha2 must not be positive".into()));
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(Error::Config("budget_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// The concrete budget for a slum.
    pub fn resolve_budget(&self, slum: &Slum) -> Result<f64> {
        self.validate()?;
        let candidates = slum.candidates.len();
        let total_cost = slum.total_candidate_cost();
        let budget = match (self.budget, self.budget_mode) {
            (Some(b), _) => b,
            (None, BudgetMode::SegmentCount) => (self.budget_fraction * candidates as f64).ceil(),
            (None, BudgetMode::ConstructionCost) => self.budget_fraction * total_cost,
        };
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::Config(format!("budget must be positive, got {budget}")));
        }
        match self.budget_mode {
            BudgetMode::SegmentCount => {
                if budget.fract() != 0.0 {
                    return Err(Error::Config(format!("segment budget {budget} is not a whole number")));
                }
                if budget > candidates as f64 {
                    return Err(Error::Config(format!("budget {budget} exceeds {candidates} candidate segments")));
                }
            }
            BudgetMode::ConstructionCost => {
                if budget > total_cost * (1.0 + 1e-12) {
                    return Err(Error::Config(format!("budget {budget} exceeds total candidate cost {total_cost}")));
                }
            }
        }
        Ok(budget)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// Stage after the step.
    pub stage: Stage,
    /// Faces that actually gained access with this step.
    pub newly_connected: usize,
    /// D after the step.
    pub d_value: f64,
    /// The distance term of a Stage II reward, before weighting (0 in Stage I).
    pub d_reduction: f64,
    /// Unconnected faces at the far endpoint counted by a Stage I reward.
    pub far_count: usize,
}

#[derive(Clone, Debug)]
pub struct Env {
    state: SlumGraph,
    cfg: EnvConfig,
    budget: f64,
    stage: Stage,
    spent: f64,
    d_value: f64,
    mask: Vec<bool>,
    done: bool,
}

impl Env {
    pub fn reset(slum: Arc<Slum>, cfg: &EnvConfig) -> Result<Env> {
        let budget = cfg.resolve_budget(&slum)?;
        let state = SlumGraph::new(slum);
        let stage = if state.all_connected() { Stage::StageII } else { Stage::StageI };
        let mut env = Env { d_value: 0.0, state, cfg: cfg.clone(), budget, stage, spent: 0.0, mask: Vec::new(), done: false };
        env.d_value = env.pairwise_mean_distance();
        env.mask = env.compute_mask()?;
        env.done = !env.mask.iter().any(|&m| m);
        Ok(env)
    }

    pub fn state(&self) -> &SlumGraph {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn steps(&self) -> usize {
        self.state.step_index()
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// The mask for the next action.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// D(k) for the current state.
    pub fn pairwise_mean_distance(&self) -> f64 {
        let nf = self.state.slum().face_count();
        let mean = self.state.average_face_distance();
        match self.cfg.d_normalization {
            DNormalization::MeanPairs => mean,
            DNormalization::PaperLiteral => {
                let pairs = (nf * nf.saturating_sub(1)) as f64 / 2.0;
                mean * pairs * pairs
            }
        }
    }

    fn remaining(&self) -> f64 {
        self.budget - self.spent
    }

    fn affordable(&self, e: EdgeId) -> bool {
        match self.cfg.budget_mode {
            BudgetMode::SegmentCount => true,
            BudgetMode::ConstructionCost => self.state.graph().edges[e].cost <= self.remaining() + 1e-12 * self.budget,
        }
    }

    fn stage_ii_allowed(&self, e: EdgeId) -> bool {
        let (a, b) = self.state.graph().edges[e].ends;
        !self.state.is_road(e) && (self.state.on_road(a) || self.state.on_road(b))
    }

    /// Unconnected faces at the far endpoint, maximized over orientations
    /// that start from a road node; `None` when neither endpoint is on
    /// the network.
    pub fn far_count(&self, e: EdgeId) -> Option<usize> {
        let (a, b) = self.state.graph().edges[e].ends;
        let count = |near, far| self.state.on_road(near).then(|| self.state.unconnected_faces_at(far));
        match (count(a, b), count(b, a)) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        }
    }

    fn stage_i_allowed(&self, e: EdgeId) -> bool {
        !self.state.is_road(e) && self.far_count(e).is_some_and(|c| c > 0)
    }

    fn compute_mask(&self) -> Result<Vec<bool>> {
        let m = self.state.graph().edges.len();
        let structural: Vec<bool> = if !self.cfg.masking {
            (0..m).map(|e| !self.state.is_road(e)).collect()
        } else if self.stage == Stage::StageI {
            let mask: Vec<bool> = (0..m).map(|e| self.stage_i_allowed(e)).collect();
            if mask.iter().any(|&x| x) {
                mask
            } else if self.cfg.relax_deadlock {
                (0..m).map(|e| self.stage_ii_allowed(e)).collect()
            } else {
                return Err(Error::Deadlock(self.state.unconnected_count()));
            }
        } else {
            (0..m).map(|e| self.stage_ii_allowed(e)).collect()
        };
        Ok(structural.iter().enumerate().map(|(e, &ok)| ok && self.affordable(e)).collect())
    }

    pub fn step(&mut self, edge: EdgeId) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::InvalidAction { edge, reason: "episode is over".into() });
        }
        if !self.mask.get(edge).copied().unwrap_or(false) {
            return Err(Error::InvalidAction { edge, reason: "masked".into() });
        }
        let cost = self.state.graph().edges[edge].cost;
        let stage = self.stage;
        let far = match stage {
            Stage::StageI => self.far_count(edge).unwrap_or(0),
            Stage::StageII => 0,
        };
        let newly = self.state.set_road(edge)?;
        self.spent += cost;
        let d_before = self.d_value;
        self.d_value = self.pairwise_mean_distance();
        let (gain, d_reduction) = match stage {
            Stage::StageI => (far as f64, 0.0),
            Stage::StageII => (d_before - self.d_value, d_before - self.d_value),
        };
        let reward = self.cfg.alpha1 * gain + self.cfg.alpha2 * cost;
        if self.stage == Stage::StageI && self.state.all_connected() {
            self.stage = Stage::StageII;
        }
        let exhausted = match self.cfg.budget_mode {
            BudgetMode::SegmentCount => self.steps() as f64 >= self.budget,
            BudgetMode::ConstructionCost => false,
        };
        if exhausted {
            self.mask.iter_mut().for_each(|m| *m = false);
            self.done = true;
        } else {
            self.mask = self.compute_mask()?;
            self.done = !self.mask.iter().any(|&m| m);
        }
        Ok(StepOutcome {
            reward,
            done: self.done,
            stage: self.stage,
            newly_connected: newly.len(),
            d_value: self.d_value,
            d_reduction,
            far_count: far,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_planar_graph;
    use crate::harness::generate_synthetic;

    fn slum(rows: usize, cols: usize) -> Arc<Slum> {
        let g = build_planar_graph(&generate_synthetic(rows, cols, 0.0, 0).unwrap()).unwrap();
        Slum::new("grid", g).unwrap()
    }

    fn node(s: &Slum, r: f64, c: f64) -> usize {
        s.graph.nodes.iter().position(|p| p.x == c && p.y == r).unwrap()
    }

    #[test]
    fn starting_stage() {
        let cfg = EnvConfig::default();
        assert_eq!(Env::reset(slum(2, 2), &cfg).unwrap().stage(), Stage::StageII);
        assert_eq!(Env::reset(slum(3, 3), &cfg).unwrap().stage(), Stage::StageI);
    }

    #[test]
    fn fresh_three_by_three_mask() {
        let s = slum(3, 3);
        let env = Env::reset(s.clone(), &EnvConfig::default()).unwrap();
        let allowed: Vec<usize> = (0..s.edge_count()).filter(|&e| env.mask()[e]).collect();
        let inner = [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0)];
        let expected: Vec<usize> = (0..s.edge_count())
            .filter(|&e| {
                let (a, b) = s.graph.edges[e].ends;
                let is_inner = |n: usize| inner.iter().any(|&(r, c)| node(&s, r, c) == n);
                !s.graph.edges[e].road && (is_inner(a) != is_inner(b))
            })
            .collect();
        assert_eq!(expected.len(), 8);
        assert_eq!(allowed, expected);
    }

    #[test]
    fn stage_i_reward_and_switch() {
        let s = slum(3, 3);
        let cfg = EnvConfig { alpha2: 0.0, ..EnvConfig::default() };
        let mut env = Env::reset(s.clone(), &cfg).unwrap();
        let e = s.graph.edge_between(node(&s, 0.0, 1.0), node(&s, 1.0, 1.0)).unwrap();
        let out = env.step(e).unwrap();
        assert_eq!(out.reward, 1.0);
        assert_eq!(out.stage, Stage::StageII);
        assert!(matches!(env.step(e), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn reward_is_weighted_gain_minus_cost() {
        let s = slum(3, 3);
        let cfg = EnvConfig { alpha1: 2.0, alpha2: -1.0, ..EnvConfig::default() };
        let mut env = Env::reset(s.clone(), &cfg).unwrap();
        let e = env.mask().iter().position(|&m| m).unwrap();
        let out = env.step(e).unwrap();
        assert_eq!(out.reward, 2.0 * out.far_count as f64 - s.graph.edges[e].cost);
    }

    #[test]
    fn segment_budget_fixes_episode_length() {
        let s = slum(3, 3);
        let mut env = Env::reset(s, &EnvConfig::default()).unwrap();
        assert_eq!(env.budget(), 6.0);
        let mut n = 0;
        while !env.done() {
            let e = env.mask().iter().position(|&m| m).unwrap();
            env.step(e).unwrap();
            n += 1;
        }
        assert_eq!(n, 6);
    }

    #[test]
    fn budget_validation() {
        let s = slum(3, 3);
        let too_many = EnvConfig { budget: Some(13.0), ..EnvConfig::default() };
        assert!(matches!(Env::reset(s.clone(), &too_many), Err(Error::Config(_))));
        let costly = EnvConfig { budget_mode: BudgetMode::ConstructionCost, budget: Some(12.5), ..EnvConfig::default() };
        assert!(matches!(Env::reset(s.clone(), &costly), Err(Error::Config(_))));
        let positive_alpha2 = EnvConfig { alpha2: 0.1, ..EnvConfig::default() };
        assert!(matches!(Env::reset(s, &positive_alpha2), Err(Error::Config(_))));
    }

    #[test]
    fn cost_budget_is_never_exceeded() {
        let s = slum(3, 3);
        let cfg = EnvConfig { budget_mode: BudgetMode::ConstructionCost, budget: Some(2.5), ..EnvConfig::default() };
        let mut env = Env::reset(s, &cfg).unwrap();
        while !env.done() {
            let e = env.mask().iter().rposition(|&m| m).unwrap();
            env.step(e).unwrap();
        }
        assert_eq!(env.steps(), 2);
        assert!(env.spent() <= 2.5);
    }

    /// A square place inside a square exterior, reached only through
    /// two-segment connectors, so no single edge can connect it.
    pub(crate) fn moat() -> Arc<Slum> {
        let doc = serde_json::json!({
            "nodes": [[0,0],[4,0],[4,4],[0,4],[1,1],[3,1],[3,3],[1,3],[0.5,0.5],[3.5,0.5],[3.5,3.5],[0.5,3.5]],
            "edges": [
                {"endpoints": [0,1], "cost": 4, "exterior": true},
                {"endpoints": [1,2], "cost": 4, "exterior": true},
                {"endpoints": [2,3], "cost": 4, "exterior": true},
                {"endpoints": [3,0], "cost": 4, "exterior": true},
                {"endpoints": [4,5], "cost": 2}, {"endpoints": [5,6], "cost": 2},
                {"endpoints": [6,7], "cost": 2}, {"endpoints": [7,4], "cost": 2},
                {"endpoints": [0,8], "cost": 0.7}, {"endpoints": [8,4], "cost": 0.7},
                {"endpoints": [1,9], "cost": 0.7}, {"endpoints": [9,5], "cost": 0.7},
                {"endpoints": [2,10], "cost": 0.7}, {"endpoints": [10,6], "cost": 0.7},
                {"endpoints": [3,11], "cost": 0.7}, {"endpoints": [11,7], "cost": 0.7}
            ],
            "faces": [
                {"nodes": [4,5,6,7]},
                {"nodes": [0,1,9,5,4,8]},
                {"nodes": [1,2,10,6,5,9]},
                {"nodes": [2,3,11,7,6,10]},
                {"nodes": [3,0,8,4,7,11]}
            ]
        });
        let g = serde_json::from_value::<crate::geometry::GraphDocument>(doc).unwrap().into_graph().unwrap();
        Slum::new("moat", g).unwrap()
    }

    #[test]
    fn deadlock_without_relaxation() {
        let strict = EnvConfig { relax_deadlock: false, ..EnvConfig::default() };
        assert!(matches!(Env::reset(moat(), &strict), Err(Error::Deadlock(1))));
        let mut env = Env::reset(moat(), &EnvConfig::default()).unwrap();
        assert_eq!(env.stage(), Stage::StageI);
        let allowed: Vec<usize> = (0..16).filter(|&e| env.mask()[e]).collect();
        assert_eq!(allowed, vec![8, 10, 12, 14]);
        let out = env.step(8).unwrap();
        assert_eq!((out.reward, out.far_count, out.newly_connected), (-0.35, 0, 0));
        assert!(env.mask()[9]);
        assert_eq!(env.step(9).unwrap().stage, Stage::StageII);
    }

    #[test]
    fn faces_sharing_access_have_zero_d() {
        let g = build_planar_graph(&generate_synthetic(1, 2, 0.0, 0).unwrap()).unwrap();
        let s = Slum::new("pair", g).unwrap();
        let env = Env::reset(s, &EnvConfig::default()).unwrap();
        assert_eq!(env.pairwise_mean_distance(), 0.0);
    }
}
