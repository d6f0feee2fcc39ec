use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slumroad::env::{EnvConfig, Stage};
use slumroad::geometry::{GraphDocument, PlanarGraph};
use slumroad::harness::synthetic_slum;
use slumroad::nn::{entropy, forward, masked_distribution, ModelConfig, Params};
use slumroad::state::{Slum, SlumGraph};
use slumroad::trainer::{advantages, build_batch, loss_and_gradient, rollout, sample, surrogate, Sample, TrainConfig, Trajectory};
use slumroad::Error;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn distribution_contract(scores in prop::collection::vec(-50.0f64..50.0, 1..40), mask_bits in any::<u64>(), shift in -1e3f64..1e3) {
        let n = scores.len();
        let mut mask: Vec<bool> = (0..n).map(|i| mask_bits >> (i % 64) & 1 == 1).collect();
        mask[(mask_bits % n as u64) as usize] = true;
        let p = masked_distribution(&scores, &mask).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..n {
            if !mask[i] {
                prop_assert_eq!(p[i], 0.0);
            }
        }
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let q = masked_distribution(&shifted, &mask).unwrap();
        for i in 0..n {
            prop_assert!((p[i] - q[i]).abs() <= 1e-12);
        }
        let h = entropy(&p);
        let allowed = mask.iter().filter(|&&m| m).count() as f64;
        prop_assert!(h >= -1e-12 && h <= allowed.ln() + 1e-12);
    }
}

#[test]
fn empty_mask_and_shape_errors() {
    assert!(matches!(masked_distribution(&[1.0, 2.0], &[false, false]), Err(Error::EmptyMask)));
    assert!(matches!(masked_distribution(&[1.0, 2.0], &[true]), Err(Error::Shape(_))));
}

#[test]
fn sampling_frequencies_within_three_sigma() {
    let scores = [0.3, -1.0, 2.0, 0.0, 1.1, 5.0];
    let mask = [true, true, true, false, true, false];
    let p = masked_distribution(&scores, &mask).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..draws {
        counts[sample(&p, &mut rng)] += 1;
    }
    for i in 0..6 {
        let expected = draws as f64 * p[i];
        let sigma = (draws as f64 * p[i] * (1.0 - p[i])).sqrt();
        assert!((counts[i] as f64 - expected).abs() <= 3.0 * sigma, "index {i}: {} vs {expected:.1} ± {sigma:.1}", counts[i]);
    }
    assert_eq!(counts[3] + counts[5], 0);
}

#[test]
fn clip_arithmetic() {
    assert_eq!(surrogate(1.5, 1.0, 0.2), 1.2);
    assert_eq!(surrogate(0.5, 1.0, 0.2), 0.5);
    assert_eq!(surrogate(0.5, -1.0, 0.2), -0.8);
    assert_eq!(surrogate(1.5, -1.0, 0.2), -1.5);
    assert_eq!(surrogate(1.0, 3.0, 0.2), 3.0);
}

#[test]
fn gae_matches_explicit_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = rng.random_range(1..12);
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (gamma, tau) = (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0));
        let (adv, ret) = advantages(&r, &v, gamma, tau);
        let next = |i: usize| if i + 1 < t { v[i + 1] } else { 0.0 };
        for i in 0..t {
            let explicit: f64 = (i..t).map(|j| (gamma * tau).powi((j - i) as i32) * (r[j] + gamma * next(j) - v[j])).sum();
            assert!((adv[i] - explicit).abs() < 1e-12);
            assert!((ret[i] - adv[i] - v[i]).abs() < 1e-12);
        }
        // tau = 1 gives the discounted Monte Carlo return
        let (_, mc) = advantages(&r, &v, gamma, 1.0);
        for i in 0..t {
            let g: f64 = (i..t).map(|j| gamma.powi((j - i) as i32) * r[j]).sum();
            assert!((mc[i] - g).abs() < 1e-12);
        }
    }
}

fn batch(slum: &Arc<Slum>, params: &Params, cfg: &TrainConfig, episodes: u64) -> Vec<Sample> {
    let env = EnvConfig::default();
    let trajs: Vec<Trajectory> = (0..episodes).map(|k| rollout(slum, &env, params, &[], &mut ChaCha8Rng::seed_from_u64(k)).unwrap()).collect();
    build_batch(&trajs, cfg)
}

#[test]
fn unchanged_parameters_give_unit_ratios() {
    let slum = synthetic_slum(4, 4, 0.2, 5).unwrap();
    let cfg = TrainConfig::default();
    let params = Params::init(&cfg.model, 9).unwrap();
    let b = batch(&slum, &params, &cfg, 4);
    let refs: Vec<&Sample> = b.iter().collect();
    let (rep, _) = loss_and_gradient(&slum, &refs, &params, &cfg).unwrap();
    assert!(rep.max_ratio_error <= 1e-12, "{}", rep.max_ratio_error);
    assert!((rep.mean_ratio - 1.0).abs() <= 1e-12);
    assert_eq!(rep.clip_fraction, 0.0);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let slum = synthetic_slum(3, 3, 0.2, 2).unwrap();
    let cfg = TrainConfig { entropy_beta: 0.05, value_coef: 0.7, ..TrainConfig::default() };
    let old = Params::init(&cfg.model, 4).unwrap();
    let b = batch(&slum, &old, &cfg, 3);
    let refs: Vec<&Sample> = b.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut params = old.clone();
    params.values.iter_mut().for_each(|v| *v += rng.random_range(-0.02..0.02));
    let (rep, grad) = loss_and_gradient(&slum, &refs, &params, &cfg).unwrap();
    assert!(rep.clip_fraction < 1.0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..150 {
        let i = rng.random_range(0..params.len());
        let mut plus = params.clone();
        plus.values[i] += h;
        let mut minus = params.clone();
        minus.values[i] -= h;
        let lp = loss_and_gradient(&slum, &refs, &plus, &cfg).unwrap().0.total;
        let lm = loss_and_gradient(&slum, &refs, &minus, &cfg).unwrap().0.total;
        let fd = (lp - lm) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-4);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

/// Relabels the nodes of a graph by `perm` (old id -> new id), keeping
/// edge and face order.
fn relabel(g: &PlanarGraph, perm: &[usize]) -> PlanarGraph {
    let mut doc: GraphDocument = g.to_document(None);
    let mut nodes = doc.nodes.clone();
    for (old, &new) in perm.iter().enumerate() {
        nodes[new] = doc.nodes[old];
    }
    doc.nodes = nodes;
    for e in &mut doc.edges {
        e.endpoints = [perm[e.endpoints[0]], perm[e.endpoints[1]]];
    }
    for f in &mut doc.faces {
        f.nodes.iter_mut().for_each(|n| *n = perm[*n]);
    }
    doc.into_graph().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn scores_are_node_permutation_invariant(seed in any::<u64>(), steps in 0usize..6) {
        let slum = synthetic_slum(3, 4, 0.2, seed % 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = slum.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let other = Slum::new("relabelled", relabel(&slum.graph, &perm)).unwrap();
        let (mut a, mut b) = (SlumGraph::new(Arc::clone(&slum)), SlumGraph::new(Arc::clone(&other)));
        for &e in slum.candidates.iter().take(steps) {
            a.set_road(e).unwrap();
            b.set_road(e).unwrap();
        }
        let (fa, fb) = (a.features(), b.features());
        for v in 0..n {
            for k in 0..9 {
                prop_assert!((fa.node[v * 9 + k] - fb.node[perm[v] * 9 + k]).abs() < 1e-9);
            }
        }
        for i in 0..fa.edge.len() {
            prop_assert!((fa.edge[i] - fb.edge[i]).abs() < 1e-9);
        }
        let params = Params::init(&ModelConfig::default(), seed).unwrap();
        let (oa, ob) = (forward(&slum.graph, &fa, Stage::StageI, &params).unwrap(), forward(&other.graph, &fb, Stage::StageI, &params).unwrap());
        for (x, y) in oa.scores.iter().zip(&ob.scores) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((oa.value - ob.value).abs() < 1e-9);
    }
}

#[test]
fn checkpoint_round_trip() {
    let cfg = ModelConfig { head_bias: false, e2e: false, ..ModelConfig::default() };
    let p = Params::init(&cfg, 3).unwrap();
    let back = Params::from_json(&p.to_json()).unwrap();
    assert_eq!(back.values, p.values);
    assert_eq!(back.config, p.config);
    let mut doc: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    doc["tensors"][0]["values"].as_array_mut().unwrap().pop();
    assert!(Params::from_json(&doc.to_string()).is_err());
}
