//! Data preparation, experiment configuration, evaluation and output.

mod ablate;
mod compare;
mod config;
mod oracle;
mod render;
mod synthetic;

pub use self::ablate::{ablate, Ablation, Variant};
pub use self::compare::{compare, summarize, train_and_plan, write_comparison, Comparison, PlannerSummary, RunRecord, Spread, Summary};
pub use self::config::{
    load_slum, BaselineSettings, ExperimentConfig, OutputSection, PlannerId, SlumSection, SyntheticSpec, LEARNED, OUTPUT_VAR, SEED_VAR,
};
pub use self::oracle::{brute_force_oracle, OracleResult, ORACLE_LIMIT};
pub use self::render::{
    export_plan_geojson, import_plan_geojson, plan_stages, render_svg, DISCONNECTED_COLOR, EXTERIOR_COLOR, STAGE_II_COLOR, STAGE_I_COLOR,
};
pub use self::synthetic::generate_synthetic;

use std::sync::Arc;

use crate::error::Result;
use crate::geometry::{build_planar_graph, default_merge_eps, normalize, simplify, PlanarGraph, SimplifyMap};
use crate::state::Slum;

/// Simplifies (with the default merge distance unless given) and
/// normalizes a raw planar graph.
pub fn prepare_graph(graph: &PlanarGraph, merge_eps: Option<f64>) -> Result<(PlanarGraph, SimplifyMap)> {
    let eps = merge_eps.unwrap_or_else(|| default_merge_eps(graph));
    let (simplified, map) = simplify(graph, eps)?;
    Ok((normalize(&simplified), map))
}

/// A prepared synthetic grid slum.
pub fn synthetic_slum(rows: usize, cols: usize, jitter: f64, seed: u64) -> Result<Arc<Slum>> {
    let raw = build_planar_graph(&generate_synthetic(rows, cols, jitter, seed)?)?;
    let (graph, _) = prepare_graph(&raw, None)?;
    Slum::new(format!("grid{rows}x{cols}"), graph)
}
