//! Plan reports shared by every planner.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{BudgetMode, Env, EnvConfig, Stage};
use crate::error::{Error, Result};
use crate::geometry::EdgeId;
use crate::state::{Slum, SlumGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step: usize,
    pub edge: EdgeId,
    /// Stage in which the edge was chosen.
    pub stage: Stage,
    pub reward: f64,
    pub cumulative_sc: f64,
    pub connected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub slum: String,
    pub planner: String,
    pub budget_mode: BudgetMode,
    pub budget: f64,
    pub steps: Vec<PlanStep>,
    pub nr: Option<usize>,
    pub ad: f64,
    pub sc: f64,
    pub universal: bool,
    pub total_reward: f64,
}

impl PlanReport {
    pub fn edges(&self) -> Vec<EdgeId> {
        self.steps.iter().map(|s| s.edge).collect()
    }

    /// Checks the step log against itself and against a replay of the
    /// plan on `slum`.
    pub fn check_consistency(&self, slum: &Arc<Slum>) -> Result<()> {
        let bad = |m: String| Err(Error::Numerical(format!("inconsistent plan report: {m}")));
        for w in self.steps.windows(2) {
            if w[1].cumulative_sc < w[0].cumulative_sc || w[1].connected < w[0].connected {
                return bad(format!("step {} is not monotone", w[1].step));
            }
        }
        let mut state = SlumGraph::new(Arc::clone(slum));
        for s in &self.steps {
            state.set_road(s.edge)?;
            if state.connected_count() != s.connected {
                return bad(format!("connected count at step {}", s.step));
            }
        }
        let m = state.metrics();
        if m.nr != self.nr || m.universal != self.universal || m.ad != self.ad || (m.sc - self.sc).abs() > 1e-9 * m.sc.max(1.0) {
            return bad("finals differ from a replay".into());
        }
        if let Some(last) = self.steps.last() {
            if (last.cumulative_sc - self.sc).abs() > 1e-9 * self.sc.max(1.0) {
                return bad("final SC differs from the step log".into());
            }
        }
        Ok(())
    }
}

/// Runs one episode, asking `choose` for every action; `None` ends the
/// episode early with the rest of the budget unspent.
pub fn run_episode(slum: &Arc<Slum>, cfg: &EnvConfig, planner: &str, mut choose: impl FnMut(&Env) -> Result<Option<EdgeId>>) -> Result<PlanReport> {
    let mut env = Env::reset(Arc::clone(slum), cfg)?;
    let mut steps = Vec::new();
    let mut total_reward = 0.0;
    while !env.done() {
        let stage = env.stage();
        let Some(edge) = choose(&env)? else { break };
        let out = env.step(edge)?;
        total_reward += out.reward;
        steps.push(PlanStep {
            step: steps.len() + 1,
            edge,
            stage,
            reward: out.reward,
            cumulative_sc: env.spent(),
            connected: env.state().connected_count(),
        });
    }
    Ok(finish(&env, planner, steps, total_reward))
}

fn finish(env: &Env, planner: &str, steps: Vec<PlanStep>, total_reward: f64) -> PlanReport {
    let m = env.state().metrics();
    PlanReport {
        slum: env.state().slum().id.clone(),
        planner: planner.to_owned(),
        budget_mode: env.config().budget_mode,
        budget: env.budget(),
        steps,
        nr: m.nr,
        ad: m.ad,
        sc: m.sc,
        universal: m.universal,
        total_reward,
    }
}

/// Applies an edge sequence in order with masking disabled, stopping at
/// the end of the sequence or of the budget.
pub fn report_edge_sequence(slum: &Arc<Slum>, cfg: &EnvConfig, planner: &str, edges: &[EdgeId]) -> Result<PlanReport> {
    let unmasked = EnvConfig { masking: false, ..cfg.clone() };
    let mut queue = edges.iter().copied();
    run_episode(slum, &unmasked, planner, |_| Ok(queue.next()))
}

/// Index of the largest value among allowed entries; ties go to the
/// lowest index.
pub fn argmax_masked(values: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptyMask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax_masked(&[1.0, 3.0, 3.0], &[true; 3]).unwrap(), 1);
        assert_eq!(argmax_masked(&[5.0, 3.0, 3.0], &[false, true, true]).unwrap(), 1);
        assert!(matches!(argmax_masked(&[1.0], &[false]), Err(Error::EmptyMask)));
    }
}
