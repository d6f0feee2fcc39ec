//! Rollouts, advantage estimation, clipped policy optimization and greedy
//! inference.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, Stage};
use crate::error::{Error, Result};
use crate::geometry::EdgeId;
use crate::nn::{entropy, forward, masked_distribution, ModelConfig, Params};
use crate::plan::{argmax_masked, run_episode, PlanReport};
use crate::state::{FeatureSet, Slum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Generalized advantage weight.
    pub tau: f64,
    pub clip_eps: f64,
    pub entropy_beta: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
    pub episodes_per_iter: usize,
    pub epochs_per_iter: usize,
    pub minibatch_size: usize,
    pub max_iterations: usize,
    /// Stop once the mean episodic reward of the last `plateau_window`
    /// iterations differs from the window before by less than
    /// `plateau_tolerance` (relative); 0 disables.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.995,
            tau: 0.0,
            clip_eps: 0.2,
            entropy_beta: 0.01,
            value_coef: 0.5,
            learning_rate: 4e-4,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            normalize_advantages: true,
            episodes_per_iter: 64,
            epochs_per_iter: 4,
            minibatch_size: 512,
            max_iterations: 100,
            plateau_window: 10,
            plateau_tolerance: 0.01,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::Config("clip_eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        if self.episodes_per_iter == 0 || self.epochs_per_iter == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("episodes, epochs and minibatch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub features: FeatureSet,
    pub mask: Vec<bool>,
    pub action: EdgeId,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub stage: Stage,
    pub done: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Zeroes the named feature groups.
pub fn apply_zeroing(features: &mut FeatureSet, zeroed: &[String]) -> Result<()> {
    zeroed.iter().try_for_each(|name| features.zero_group(name))
}

/// Samples one episode from the policy.
pub fn rollout(slum: &Arc<Slum>, env_cfg: &EnvConfig, params: &Params, zeroed: &[String], rng: &mut impl Rng) -> Result<Trajectory> {
    let mut env = Env::reset(Arc::clone(slum), env_cfg)?;
    let mut transitions = Vec::new();
    while !env.done() {
        let mut features = env.state().features();
        apply_zeroing(&mut features, zeroed)?;
        let out = forward(&slum.graph, &features, env.stage(), params)?;
        let mask = env.mask().to_vec();
        let p = masked_distribution(&out.scores, &mask)?;
        let action = sample(&p, rng);
        let stage = env.stage();
        let step = env.step(action)?;
        transitions.push(Transition {
            log_prob: p[action].ln(),
            features,
            mask,
            action,
            reward: step.reward,
            value: out.value,
            stage,
            done: step.done,
        });
    }
    Ok(Trajectory { transitions })
}

/// Inverse-CDF draw; never returns a zero-probability index.
pub fn sample(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn episode_seed(seed: u64, iteration: usize, episode: usize) -> u64 {
    seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (episode as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// `episodes_per_iter` independent episodes; results do not depend on
/// thread scheduling.
pub fn collect_rollouts(slum: &Arc<Slum>, env_cfg: &EnvConfig, params: &Params, cfg: &TrainConfig, iteration: usize) -> Result<Vec<Trajectory>> {
    (0..cfg.episodes_per_iter)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(cfg.seed, iteration, k));
            rollout(slum, env_cfg, params, &[], &mut rng)
        })
        .collect()
}

/// Generalized advantages and return targets for one finished episode.
pub fn advantages(rewards: &[f64], values: &[f64], gamma: f64, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let t = rewards.len();
    let mut adv = vec![0.0; t];
    let mut next_adv = 0.0;
    for i in (0..t).rev() {
        let next_value = if i + 1 < t { values[i + 1] } else { 0.0 };
        let delta = rewards[i] + gamma * next_value - values[i];
        next_adv = delta + gamma * tau * next_adv;
        adv[i] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// One training sample.
#[derive(Clone, Debug)]
pub struct Sample {
    pub features: FeatureSet,
    pub mask: Vec<bool>,
    pub stage: Stage,
    pub action: EdgeId,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

pub fn build_batch(trajectories: &[Trajectory], cfg: &TrainConfig) -> Vec<Sample> {
    let mut batch = Vec::new();
    for traj in trajectories {
        let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = traj.transitions.iter().map(|t| t.value).collect();
        let (adv, ret) = advantages(&rewards, &values, cfg.gamma, cfg.tau);
        for (i, t) in traj.transitions.iter().enumerate() {
            batch.push(Sample {
                features: t.features.clone(),
                mask: t.mask.clone(),
                stage: t.stage,
                action: t.action,
                old_log_prob: t.log_prob,
                advantage: adv[i],
                ret: ret[i],
            });
        }
    }
    if cfg.normalize_advantages && batch.len() > 1 {
        let n = batch.len() as f64;
        let mean = batch.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = batch.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        batch.iter_mut().for_each(|s| s.advantage = (s.advantage - mean) / std);
    }
    batch
}

/// Loss components averaged over a minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub max_ratio_error: f64,
}

struct SampleEval {
    grad: Vec<f64>,
    policy: f64,
    value: f64,
    entropy: f64,
    clipped: bool,
    ratio: f64,
}

fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, false)
    } else {
        (clipped, true)
    }
}

/// Per-sample objective `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    clipped_surrogate(ratio, advantage, eps).0
}

fn eval_sample(slum: &Slum, s: &Sample, params: &Params, cfg: &TrainConfig) -> Result<SampleEval> {
    let g = &slum.graph;
    let out = forward(g, &s.features, s.stage, params)?;
    let p = masked_distribution(&out.scores, &s.mask)?;
    let logp = p[s.action].ln();
    let ratio = (logp - s.old_log_prob).exp();
    let (surr, clipped) = clipped_surrogate(ratio, s.advantage, cfg.clip_eps);
    let h = entropy(&p);
    let verr = out.value - s.ret;

    // d(-surr)/dlogp is -r A on the unclipped branch and 0 otherwise
    let g_logp = if clipped { 0.0 } else { -ratio * s.advantage };
    let mut dscores = vec![0.0; p.len()];
    for k in 0..p.len() {
        if !s.mask[k] {
            continue;
        }
        let onehot = if k == s.action { 1.0 } else { 0.0 };
        let dlogp = onehot - p[k];
        let dh = if p[k] > 0.0 { -p[k] * (p[k].ln() + h) } else { 0.0 };
        dscores[k] = g_logp * dlogp - cfg.entropy_beta * dh;
    }
    let dvalue = 2.0 * cfg.value_coef * verr;
    let mut grad = vec![0.0; params.len()];
    out.backward(g, &s.features, params, &dscores, dvalue, &mut grad);
    Ok(SampleEval { grad, policy: -surr, value: verr * verr, entropy: h, clipped, ratio })
}

const CHUNK: usize = 16;

/// Loss and its gradient over `samples`, averaged; the reduction order is
/// fixed so the result does not depend on the thread count.
pub fn loss_and_gradient(slum: &Slum, samples: &[&Sample], params: &Params, cfg: &TrainConfig) -> Result<(LossReport, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let partials: Vec<(Vec<f64>, LossReport)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; params.len()];
            let mut rep = LossReport::default();
            for s in chunk {
                let ev = eval_sample(slum, s, params, cfg)?;
                grad.iter_mut().zip(&ev.grad).for_each(|(a, b)| *a += b);
                rep.policy += ev.policy;
                rep.value += ev.value;
                rep.entropy += ev.entropy;
                rep.clip_fraction += ev.clipped as u8 as f64;
                rep.mean_ratio += ev.ratio;
                rep.max_ratio_error = rep.max_ratio_error.max((ev.ratio - 1.0).abs());
            }
            Ok((grad, rep))
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut rep = LossReport::default();
    for (g, r) in partials {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        rep.policy += r.policy;
        rep.value += r.value;
        rep.entropy += r.entropy;
        rep.clip_fraction += r.clip_fraction;
        rep.mean_ratio += r.mean_ratio;
        rep.max_ratio_error = rep.max_ratio_error.max(r.max_ratio_error);
    }
    grad.iter_mut().for_each(|g| *g /= n);
    rep.policy /= n;
    rep.value /= n;
    rep.entropy /= n;
    rep.clip_fraction /= n;
    rep.mean_ratio /= n;
    rep.total = rep.policy - cfg.entropy_beta * rep.entropy + cfg.value_coef * rep.value;
    if !rep.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite loss".into()));
    }
    Ok((rep, grad))
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + cfg.weight_decay * params[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Several epochs of shuffled minibatch updates; returns the mean loss
/// report over all minibatches.
pub fn ppo_update(slum: &Slum, batch: &[Sample], params: &mut Params, adam: &mut Adam, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Config("empty rollout buffer".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut sum = LossReport::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs_per_iter {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch_size) {
            let samples: Vec<&Sample> = idx.iter().map(|&i| &batch[i]).collect();
            let (rep, grad) = loss_and_gradient(slum, &samples, params, cfg)?;
            adam.step(&mut params.values, &grad, cfg);
            sum.total += rep.total;
            sum.policy += rep.policy;
            sum.value += rep.value;
            sum.entropy += rep.entropy;
            sum.clip_fraction += rep.clip_fraction;
            sum.mean_ratio += rep.mean_ratio;
            sum.max_ratio_error = sum.max_ratio_error.max(rep.max_ratio_error);
            count += 1.0;
        }
    }
    Ok(LossReport {
        total: sum.total / count,
        policy: sum.policy / count,
        value: sum.value / count,
        entropy: sum.entropy / count,
        clip_fraction: sum.clip_fraction / count,
        mean_ratio: sum.mean_ratio / count,
        max_ratio_error: sum.max_ratio_error,
    })
}

/// Deterministic rollout taking the most probable edge at every step.
pub fn infer_plan(slum: &Arc<Slum>, env_cfg: &EnvConfig, params: &Params, zeroed: &[String], planner: &str) -> Result<PlanReport> {
    run_episode(slum, env_cfg, planner, |env| {
        let mut features = env.state().features();
        apply_zeroing(&mut features, zeroed)?;
        let out = forward(&slum.graph, &features, env.stage(), params)?;
        argmax_masked(&out.scores, env.mask()).map(Some)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    /// `mean_reward` rescaled to [0, 1] over the whole run.
    pub normalized_reward: f64,
    pub greedy_reward: f64,
    pub greedy_nr: Option<usize>,
    pub greedy_ad: f64,
    pub greedy_sc: f64,
    pub loss: LossReport,
}

pub struct TrainOutcome {
    pub best: Params,
    pub best_iteration: usize,
    pub last: Params,
    pub records: Vec<IterationRecord>,
}

/// The full collect, estimate, update loop. Iteration 0 is the
/// initialization; the best checkpoint is chosen by greedy episode
/// reward, earliest first on ties.
pub fn train(slum: &Arc<Slum>, env_cfg: &EnvConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    env_cfg.validate()?;
    let mut params = Params::init(&cfg.model, cfg.seed)?;
    let mut best = params.clone();
    let mut best_iteration = 0;
    if cfg.max_iterations == 0 {
        return Ok(TrainOutcome { last: params, best, best_iteration, records: Vec::new() });
    }
    let mut best_reward = infer_plan(slum, env_cfg, &params, &[], "drl-gnn")?.total_reward;
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut records: Vec<IterationRecord> = Vec::new();
    for it in 1..=cfg.max_iterations {
        let trajectories = collect_rollouts(slum, env_cfg, &params, cfg, it)?;
        let mean_reward = trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / trajectories.len() as f64;
        let batch = build_batch(&trajectories, cfg);
        let loss = ppo_update(slum, &batch, &mut params, &mut adam, cfg, &mut rng)?;
        let greedy = infer_plan(slum, env_cfg, &params, &[], "drl-gnn")?;
        if greedy.total_reward > best_reward {
            best_reward = greedy.total_reward;
            best = params.clone();
            best_iteration = it;
        }
        log::info!("iteration {it}: mean reward {mean_reward:.4}, greedy reward {:.4}", greedy.total_reward);
        records.push(IterationRecord {
            iteration: it,
            mean_reward,
            normalized_reward: 0.0,
            greedy_reward: greedy.total_reward,
            greedy_nr: greedy.nr,
            greedy_ad: greedy.ad,
            greedy_sc: greedy.sc,
            loss,
        });
        if plateaued(&records, cfg) {
            break;
        }
    }
    normalize_rewards(&mut records);
    Ok(TrainOutcome { last: params, best, best_iteration, records })
}

fn plateaued(records: &[IterationRecord], cfg: &TrainConfig) -> bool {
    let w = cfg.plateau_window;
    if w == 0 || records.len() < 2 * w {
        return false;
    }
    let mean = |r: &[IterationRecord]| r.iter().map(|x| x.mean_reward).sum::<f64>() / r.len() as f64;
    let n = records.len();
    let recent = mean(&records[n - w..]);
    let before = mean(&records[n - 2 * w..n - w]);
    (recent - before).abs() < cfg.plateau_tolerance * before.abs().max(1e-12)
}

fn normalize_rewards(records: &mut [IterationRecord]) {
    let lo = records.iter().map(|r| r.mean_reward).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.mean_reward).fold(f64::NEG_INFINITY, f64::max);
    for r in records {
        r.normalized_reward = if hi > lo { (r.mean_reward - lo) / (hi - lo) } else { 1.0 };
    }
}
