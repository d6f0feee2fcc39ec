use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slumroad::env::Stage;
use slumroad::geometry::{build_planar_graph, PlanarGraph};
use slumroad::harness::generate_synthetic;
use slumroad::nn::{forward, ModelConfig, Params};
use slumroad::state::FeatureSet;

fn small_graphs() -> Vec<PlanarGraph> {
    let mut out = Vec::new();
    for (k, &(rows, cols)) in [(1, 2), (1, 3), (2, 2), (1, 4)].iter().cycle().take(20).enumerate() {
        let jitter = if k < 4 { 0.0 } else { 0.3 };
        out.push(build_planar_graph(&generate_synthetic(rows, cols, jitter, k as u64).unwrap()).unwrap());
    }
    out
}

fn random_features(g: &PlanarGraph, rng: &mut impl Rng) -> FeatureSet {
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    FeatureSet { node: v(g.nodes.len() * 9), edge: v(g.edges.len() * 3), face: v(g.faces.len() * 3) }
}

fn objective(g: &PlanarGraph, f: &FeatureSet, stage: Stage, p: &Params, ws: &[f64], wv: f64) -> f64 {
    let out = forward(g, f, stage, p).unwrap();
    out.scores.iter().zip(ws).map(|(s, w)| s * w).sum::<f64>() + wv * out.value
}

fn max_relative_error(g: &PlanarGraph, cfg: &ModelConfig, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::init(cfg, seed).unwrap();
    // non-zero biases so every path is exercised
    for v in p.values.iter_mut() {
        if *v == 0.0 {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    let f = random_features(g, &mut rng);
    let stage = if seed % 2 == 0 { Stage::StageI } else { Stage::StageII };
    let ws: Vec<f64> = (0..g.edges.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wv = rng.random_range(-1.0..1.0);

    let out = forward(g, &f, stage, &p).unwrap();
    let mut grad = vec![0.0; p.len()];
    out.backward(g, &f, &p, &ws, wv, &mut grad);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p.values[i];
        p.values[i] = orig + h;
        let up = objective(g, &f, stage, &p, &ws, wv);
        p.values[i] = orig - h;
        let down = objective(g, &f, stage, &p, &ws, wv);
        p.values[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn full_model_matches_finite_differences() {
    let cfg = ModelConfig { dim: 6, policy_hidden: 5, value_hidden: 4, ..ModelConfig::default() };
    for (k, g) in small_graphs().iter().enumerate() {
        let err = max_relative_error(g, &cfg, k as u64);
        assert!(err < 1e-4, "graph {k}: relative error {err}");
    }
}

#[test]
fn default_dimensions_match_finite_differences() {
    let g = &small_graphs()[2];
    let err = max_relative_error(g, &ModelConfig::default(), 99);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn disabled_branches_and_no_head_bias() {
    let g = &small_graphs()[5];
    for cfg in [
        ModelConfig { dim: 4, n2e: false, ..ModelConfig::default() },
        ModelConfig { dim: 4, f2e: false, ..ModelConfig::default() },
        ModelConfig { dim: 4, e2e: false, head_bias: false, ..ModelConfig::default() },
        ModelConfig { dim: 4, layers: 3, ..ModelConfig::default() },
    ] {
        let err = max_relative_error(g, &cfg, 3);
        assert!(err < 1e-4, "{cfg:?}: relative error {err}");
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let g = &small_graphs()[0];
    let p = Params::init(&ModelConfig::default(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = random_features(g, &mut rng);
    let out = forward(g, &f, Stage::StageI, &p).unwrap();
    let mut grad = vec![0.0; p.len()];
    out.backward(g, &f, &p, &vec![0.0; g.edges.len()], 0.0, &mut grad);
    assert!(grad.iter().all(|&x| x == 0.0));
}
