use std::sync::Arc;

use slumroad::env::{EnvConfig, Stage};
use slumroad::harness::{
    ablate, brute_force_oracle, compare, export_plan_geojson, generate_synthetic, import_plan_geojson, render_svg, synthetic_slum, ExperimentConfig,
    SlumSection, SyntheticSpec, Variant, STAGE_II_COLOR, STAGE_I_COLOR,
};
use slumroad::nn::{forward, ModelConfig, Params};
use slumroad::plan::run_episode;
use slumroad::state::{SlumGraph, FACE_FEATURES};
use slumroad::trainer::{infer_plan, TrainConfig};
use slumroad::Error;

#[test]
fn synthetic_examples() {
    let two = synthetic_slum(2, 2, 0.0, 0).unwrap();
    assert_eq!(two.face_count(), 4);
    assert!(SlumGraph::new(Arc::clone(&two)).all_connected());
    let three = synthetic_slum(3, 3, 0.0, 0).unwrap();
    assert_eq!(SlumGraph::new(Arc::clone(&three)).unconnected_count(), 1);
    assert_eq!(generate_synthetic(1, 1, 0.0, 0).unwrap().places.len(), 1);
    assert_eq!(generate_synthetic(4, 2, 0.3, 9).unwrap(), generate_synthetic(4, 2, 0.3, 9).unwrap());
    assert!(matches!(generate_synthetic(0, 2, 0.0, 0), Err(Error::Config(_))));
    assert!(matches!(generate_synthetic(2, 2, 0.5, 0), Err(Error::Config(_))));
}

#[test]
fn oracle_on_three_by_three() {
    let slum = synthetic_slum(3, 3, 0.0, 0).unwrap();
    let o = brute_force_oracle(&slum, 6).unwrap();
    assert_eq!(o.min_nr, Some(1));
    // each corner of the centre block has two segments out to the boundary
    assert_eq!(o.min_nr_subsets.len(), 8);
    assert_eq!(o.evaluated, 1 + 12 + 924);
    let min_ad = o.min_ad.unwrap();
    for subset in &o.min_ad_subsets {
        let mut s = SlumGraph::new(Arc::clone(&slum));
        subset.iter().for_each(|&e| {
            s.set_road(e).unwrap();
        });
        assert_eq!(s.average_face_distance(), min_ad);
    }
}

#[test]
fn oracle_with_zero_budget_reports_the_exterior_network() {
    let slum = synthetic_slum(2, 2, 0.1, 1).unwrap();
    let o = brute_force_oracle(&slum, 0).unwrap();
    assert_eq!(o.min_nr, Some(0));
    assert_eq!(o.min_ad, Some(SlumGraph::new(Arc::clone(&slum)).average_face_distance()));
}

#[test]
fn oracle_refuses_large_spaces() {
    let slum = synthetic_slum(6, 6, 0.0, 0).unwrap();
    let k = slum.candidates.len() / 2;
    assert!(matches!(brute_force_oracle(&slum, k), Err(Error::TooLarge(_))));
    assert!(matches!(brute_force_oracle(&slum, slum.candidates.len() + 1), Err(Error::Domain(_))));
}

#[test]
fn render_styles() {
    let slum = synthetic_slum(3, 3, 0.0, 0).unwrap();
    let empty = render_svg(&slum, &[]).unwrap();
    assert_eq!(empty.matches(STAGE_I_COLOR).count() + empty.matches(STAGE_II_COLOR).count(), 0);
    assert_eq!(empty.matches("class=\"exterior\"").count(), slum.graph.exterior_count());
    assert_eq!(empty.matches("fill=\"#d62728\"").count(), 1);

    let plan = run_episode(&slum, &EnvConfig::default(), "first", |env| Ok(env.mask().iter().position(|&m| m))).unwrap();
    let one = render_svg(&slum, &plan.edges()[..1]).unwrap();
    assert_eq!(one.matches(STAGE_I_COLOR).count(), 1);
    assert_eq!(one.matches("fill=\"#d62728\"").count(), 0);
    let full = render_svg(&slum, &plan.edges()).unwrap();
    let stage_ii = plan.steps.iter().filter(|s| s.stage == Stage::StageII).count();
    assert_eq!(full.matches(STAGE_II_COLOR).count(), stage_ii);
}

#[test]
fn exported_plans_re_ingest_to_the_same_steps() {
    let slum = synthetic_slum(4, 4, 0.2, 6).unwrap();
    let plan = run_episode(&slum, &EnvConfig::default(), "first", |env| Ok(env.mask().iter().rposition(|&m| m))).unwrap();
    let doc = export_plan_geojson(&slum, &plan.edges()).unwrap();
    let back = import_plan_geojson(&doc.to_string()).unwrap();
    assert_eq!(back, plan.edges());
    for (f, s) in doc["features"].as_array().unwrap().iter().zip(&plan.steps) {
        assert_eq!(f["properties"]["cost"].as_f64().unwrap(), slum.graph.edges[s.edge].cost);
        assert_eq!(f["properties"]["stage"], serde_json::to_value(s.stage).unwrap());
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        planners: vec!["drl_gnn".into(), "random".into(), "greedy_c_unmasked".into(), "mst".into()],
        seeds: vec![0, 1],
        slum: SlumSection { synthetic: Some(SyntheticSpec { rows: 3, cols: 3, jitter: 0.1, seed: 2 }), ..SlumSection::default() },
        train: TrainConfig { max_iterations: 2, episodes_per_iter: 4, ..TrainConfig::default() },
        ..ExperimentConfig::default()
    }
}

#[test]
fn compare_is_reproducible() {
    let cfg = small_config();
    let slum = cfg.slum.load().unwrap();
    let a = compare(&cfg, &slum).unwrap();
    let b = compare(&cfg, &slum).unwrap();
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(a.runs.len(), 8);
    assert_eq!(a.summary.planners.len(), 4);
    assert!(a.runs.iter().filter(|r| r.planner == "drl_gnn").all(|r| r.curve.as_ref().unwrap().len() == 2));
    let lines = a.to_jsonl().unwrap();
    assert_eq!(lines.lines().count(), 9);
    assert!(lines.lines().last().unwrap().contains("\"record\":\"summary\""));
}

#[test]
fn single_planner_single_seed_gives_one_row() {
    let cfg = ExperimentConfig { planners: vec!["greedy_a".into()], seeds: vec![3], ..small_config() };
    let slum = cfg.slum.load().unwrap();
    let c = compare(&cfg, &slum).unwrap();
    assert_eq!(c.runs.len(), 1);
    assert_eq!(c.summary.planners[0].runs, 1);
}

#[test]
fn zeroing_an_unused_feature_changes_nothing() {
    let slum = synthetic_slum(4, 4, 0.2, 1).unwrap();
    let mut params = Params::init(&ModelConfig::default(), 2).unwrap();
    let w_f = params.layout.w_f;
    for r in 0..w_f.rows {
        params.values[w_f.offset + r * FACE_FEATURES + 2] = 0.0;
    }
    let cfg = ExperimentConfig { seeds: vec![0], ..small_config() };
    let out = ablate(&cfg, &slum, &Variant::parse("zero-feature:f2e").unwrap(), Some(&params)).unwrap();
    let (full, cut) = (&out.reference[0], &out.runs[0]);
    assert_eq!((full.edges.clone(), full.ad, full.sc), (cut.edges.clone(), cut.ad, cut.sc));
    let plain = infer_plan(&slum, &cfg.env, &params, &[], "x").unwrap();
    assert_eq!(plain.edges(), full.edges);
}

#[test]
fn without_propagation_every_edge_scores_alike() {
    let slum = synthetic_slum(3, 3, 0.2, 1).unwrap();
    let cfg = ModelConfig { n2e: false, f2e: false, e2e: false, ..ModelConfig::default() };
    let params = Params::init(&cfg, 4).unwrap();
    let s = SlumGraph::new(Arc::clone(&slum));
    let out = forward(&slum.graph, &s.features(), Stage::StageI, &params).unwrap();
    assert!(out.scores.iter().all(|&x| x == out.scores[0]));
    let plan = infer_plan(&slum, &EnvConfig::default(), &params, &[], "flat").unwrap();
    let first = run_episode(&slum, &EnvConfig::default(), "first", |env| Ok(env.mask().iter().position(|&m| m))).unwrap();
    assert_eq!(plan.edges(), first.edges());
}

#[test]
fn ablation_variants_train_with_the_change() {
    let cfg = ExperimentConfig { seeds: vec![0], ..small_config() };
    let slum = cfg.slum.load().unwrap();
    for name in ["no-mask", "no-e2e"] {
        let out = ablate(&cfg, &slum, &Variant::parse(name).unwrap(), None).unwrap();
        assert_eq!(out.runs.len(), 1);
        assert_eq!(out.runs[0].planner, format!("drl_gnn[{name}]"));
        assert_eq!(out.summary.planners.len(), 2);
    }
    assert!(matches!(Variant::parse("no-attention"), Err(Error::UnknownVariant(_))));
}
