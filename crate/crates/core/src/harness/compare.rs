use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PlannerId, LEARNED};
use super::render::render_svg;
use crate::baselines::run_baseline;
use crate::env::EnvConfig;
use crate::error::Result;
use crate::nn::Params;
use crate::plan::PlanReport;
use crate::state::Slum;
use crate::trainer::{infer_plan, train, IterationRecord, TrainConfig};

/// One (planner, seed) cell of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub record: String,
    pub slum: String,
    pub planner: String,
    pub seed: u64,
    pub nr: Option<usize>,
    pub ad: f64,
    pub sc: f64,
    pub universal: bool,
    pub budget: f64,
    pub edges: Vec<usize>,
    /// Per-iteration training curve, for learned planners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<IterationRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_iteration: Option<usize>,
}

impl RunRecord {
    pub fn new(report: &PlanReport, seed: u64) -> Self {
        RunRecord {
            record: "run".into(),
            slum: report.slum.clone(),
            planner: report.planner.clone(),
            seed,
            nr: report.nr,
            ad: report.ad,
            sc: report.sc,
            universal: report.universal,
            budget: report.budget,
            edges: report.edges(),
            curve: None,
            best_iteration: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// Population standard deviation over the seeds.
    pub std: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Spread { mean, std: var.sqrt(), n: values.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub planner: String,
    pub runs: usize,
    /// Over the runs that reached universal connectivity.
    pub nr: Option<Spread>,
    pub universal_runs: usize,
    pub ad: Option<Spread>,
    pub sc: Option<Spread>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub record: String,
    pub slum: String,
    pub planners: Vec<PlannerSummary>,
}

pub fn summarize(slum: &str, planners: &[String], runs: &[RunRecord]) -> Summary {
    let planners = planners
        .iter()
        .map(|p| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| &r.planner == p).collect();
            let nr: Vec<f64> = mine.iter().filter_map(|r| r.nr.map(|n| n as f64)).collect();
            let ad: Vec<f64> = mine.iter().map(|r| r.ad).collect();
            let sc: Vec<f64> = mine.iter().map(|r| r.sc).collect();
            PlannerSummary {
                planner: p.clone(),
                runs: mine.len(),
                universal_runs: mine.iter().filter(|r| r.universal).count(),
                nr: Spread::of(&nr),
                ad: Spread::of(&ad),
                sc: Spread::of(&sc),
            }
        })
        .collect();
    Summary { record: "summary".into(), slum: slum.to_owned(), planners }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
    /// Trained parameters per seed, when the learned planner ran.
    pub checkpoints: Vec<(u64, Params)>,
}

impl Comparison {
    /// Line-delimited JSON: one line per run, then the summary.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary)?);
        out.push('\n');
        Ok(out)
    }
}

/// Trains with the given seed and reports the greedy plan of the best
/// checkpoint.
pub fn train_and_plan(
    slum: &Arc<Slum>,
    env: &EnvConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    planner: &str,
    zeroed: &[String],
) -> Result<(RunRecord, Params)> {
    let cfg = TrainConfig { seed, ..train_cfg.clone() };
    let outcome = train(slum, env, &cfg)?;
    let report = infer_plan(slum, env, &outcome.best, zeroed, planner)?;
    report.check_consistency(slum)?;
    let mut record = RunRecord::new(&report, seed);
    record.curve = Some(outcome.records);
    record.best_iteration = Some(outcome.best_iteration);
    Ok((record, outcome.best))
}

/// Runs every requested planner over every seed. Cells run in parallel;
/// the output order is the planner list order, then the seed order.
pub fn compare(cfg: &ExperimentConfig, slum: &Arc<Slum>) -> Result<Comparison> {
    cfg.validate()?;
    let ids = cfg.planner_ids()?;
    let cells: Vec<(usize, u64)> = (0..ids.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<(RunRecord, Option<Params>)> = cells
        .par_iter()
        .map(|&(p, seed)| match ids[p] {
            PlannerId::Learned => train_and_plan(slum, &cfg.env, &cfg.train, seed, LEARNED, &[]).map(|(r, params)| (r, Some(params))),
            PlannerId::Baseline { kind, masked } => {
                let report = run_baseline(slum, &cfg.env, &cfg.baselines.spec(kind, masked, seed))?;
                report.check_consistency(slum)?;
                let mut r = RunRecord::new(&report, seed);
                r.planner = cfg.planners[p].clone();
                Ok((r, None))
            }
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(results.len());
    let mut checkpoints = Vec::new();
    for (r, params) in results {
        if let Some(params) = params {
            checkpoints.push((r.seed, params));
        }
        runs.push(r);
    }
    let summary = summarize(&slum.id, &cfg.planners, &runs);
    Ok(Comparison { runs, summary, checkpoints })
}

/// Writes `results.jsonl`, and per the output settings the checkpoints
/// and SVG renderings, into `dir`.
pub fn write_comparison(cmp: &Comparison, cfg: &ExperimentConfig, slum: &Arc<Slum>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("results.jsonl"))?;
    f.write_all(cmp.to_jsonl()?.as_bytes())?;
    if cfg.output.checkpoints {
        for (seed, params) in &cmp.checkpoints {
            std::fs::write(dir.join(format!("{LEARNED}_seed{seed}.checkpoint.json")), params.to_json())?;
        }
    }
    if cfg.output.render {
        for r in &cmp.runs {
            let svg = render_svg(slum, &r.edges)?;
            std::fs::write(dir.join(format!("{}_seed{}.svg", r.planner, r.seed)), svg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_of_constant_has_zero_std() {
        let s = Spread::of(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 0.0, 3));
        assert!(Spread::of(&[]).is_none());
        let s = Spread::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }
}
