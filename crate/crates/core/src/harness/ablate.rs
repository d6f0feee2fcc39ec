use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{summarize, train_and_plan, RunRecord, Summary};
use super::config::{ExperimentConfig, LEARNED};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::state::{Slum, FEATURE_GROUPS};
use crate::trainer::{infer_plan, TrainConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Zero one feature group at inference.
    ZeroFeature(String),
    NoN2e,
    NoF2e,
    NoE2e,
    /// All three propagation branches off.
    NoPropagation,
    /// Train and plan with only the not-already-road mask.
    NoMask,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Variant> {
        if let Some(feature) = name.strip_prefix("zero-feature:") {
            if !FEATURE_GROUPS.iter().any(|g| g.0 == feature) {
                return Err(Error::UnknownVariant(format!("no feature named {feature}")));
            }
            return Ok(Variant::ZeroFeature(feature.to_owned()));
        }
        match name {
            "no-n2e" => Ok(Variant::NoN2e),
            "no-f2e" => Ok(Variant::NoF2e),
            "no-e2e" => Ok(Variant::NoE2e),
            "no-propagation" => Ok(Variant::NoPropagation),
            "no-mask" => Ok(Variant::NoMask),
            _ => Err(Error::UnknownVariant(format!("no ablation named {name}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Variant::ZeroFeature(f) => format!("zero-feature:{f}"),
            Variant::NoN2e => "no-n2e".into(),
            Variant::NoF2e => "no-f2e".into(),
            Variant::NoE2e => "no-e2e".into(),
            Variant::NoPropagation => "no-propagation".into(),
            Variant::NoMask => "no-mask".into(),
        }
    }

    /// The training and environment settings the variant runs under.
    pub fn apply(&self, env: &EnvConfig, train: &TrainConfig) -> (EnvConfig, TrainConfig) {
        let (mut env, mut train) = (env.clone(), train.clone());
        let m = &mut train.model;
        match self {
            Variant::ZeroFeature(_) => {}
            Variant::NoN2e => m.n2e = false,
            Variant::NoF2e => m.f2e = false,
            Variant::NoE2e => m.e2e = false,
            Variant::NoPropagation => (m.n2e, m.f2e, m.e2e) = (false, false, false),
            Variant::NoMask => env.masking = false,
        }
        (env, train)
    }

    pub fn zeroed(&self) -> Vec<String> {
        match self {
            Variant::ZeroFeature(f) => vec![f.clone()],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub variant: String,
    /// The unmodified learned planner, one run per seed.
    pub reference: Vec<RunRecord>,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs the learned planner with and without the variant for every seed.
/// A feature-zeroing variant reuses `checkpoint` when given instead of
/// training.
pub fn ablate(cfg: &ExperimentConfig, slum: &Arc<Slum>, variant: &Variant, checkpoint: Option<&Params>) -> Result<Ablation> {
    cfg.env.validate()?;
    cfg.train.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let label = format!("{LEARNED}[{}]", variant.name());
    let zeroed = variant.zeroed();
    let pairs: Vec<(RunRecord, RunRecord)> = match (variant, checkpoint) {
        (Variant::ZeroFeature(_), Some(params)) => {
            let full = infer_plan(slum, &cfg.env, params, &[], LEARNED)?;
            let cut = infer_plan(slum, &cfg.env, params, &zeroed, &label)?;
            cfg.seeds.iter().map(|&s| (RunRecord::new(&full, s), RunRecord::new(&cut, s))).collect()
        }
        (Variant::ZeroFeature(_), None) => cfg
            .seeds
            .par_iter()
            .map(|&s| {
                let (full, params) = train_and_plan(slum, &cfg.env, &cfg.train, s, LEARNED, &[])?;
                let cut = infer_plan(slum, &cfg.env, &params, &zeroed, &label)?;
                Ok((full, RunRecord::new(&cut, s)))
            })
            .collect::<Result<_>>()?,
        _ => {
            let (env, train) = variant.apply(&cfg.env, &cfg.train);
            cfg.seeds
                .par_iter()
                .map(|&s| {
                    let (full, _) = train_and_plan(slum, &cfg.env, &cfg.train, s, LEARNED, &[])?;
                    let (cut, _) = train_and_plan(slum, &env, &train, s, &label, &[])?;
                    Ok((full, cut))
                })
                .collect::<Result<_>>()?
        }
    };
    let (reference, runs): (Vec<RunRecord>, Vec<RunRecord>) = pairs.into_iter().unzip();
    let all: Vec<RunRecord> = reference.iter().chain(&runs).cloned().collect();
    let summary = summarize(&slum.id, &[LEARNED.to_owned(), label], &all);
    Ok(Ablation { variant: variant.name(), reference, runs, summary })
}
