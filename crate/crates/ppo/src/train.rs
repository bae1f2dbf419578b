//! Rollout collection and the PPO update loop.
//!
//! Actors are stepped one after another on a single thread, each for a
//! contiguous segment per update, so a run is a pure function of its seed.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use upmsp_core::env::reward;
use upmsp_core::instance_gen::parameter_grid;
use upmsp_core::{
    build_graph, generate_instance, ActionSet, EnvState, GenParams, HeteroGraph, ProblemInstance, RewardConfig,
    SchedulingEnv,
};
use upmsp_nn::{forward, Adam, AdamConfig, GraphBatch, PolicyConfig, PolicyParams, Tape};

use crate::error::{PpoError, Result};
use crate::gae::{compute_gae, normalize};
use crate::loss::{ppo_loss, LossConfig, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Environment steps (decisions, Wait included) over the whole run.
    pub total_steps: usize,
    pub learning_rate: f64,
    /// Decay the learning rate linearly to 0 over `total_steps`.
    pub lr_decay: bool,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Steps collected per update, split evenly across actors.
    pub rollout_steps: usize,
    pub actors: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Express rewards in units of each instance's mean processing time.
    pub scale_rewards: bool,
    /// Divide rewards by the running standard deviation of the discounted
    /// return before learning.
    pub normalize_rewards: bool,
    pub policy: PolicyConfig,
    pub seed: u64,
    /// Abort when the mean `|ρ − 1|` of a minibatch exceeds this.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 200_000,
            learning_rate: 1e-4,
            lr_decay: true,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 10,
            minibatch: 64,
            rollout_steps: 2048,
            actors: 8,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            alpha: 1.0,
            beta: 1.0,
            scale_rewards: true,
            normalize_rewards: true,
            policy: PolicyConfig::default(),
            seed: 0,
            divergence_limit: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PpoError::Config(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.actors == 0 || self.rollout_steps < self.actors {
            return bad("need at least one actor and one step per actor");
        }
        if self.minibatch == 0 || self.minibatch > self.rollout_steps {
            return bad("minibatch must lie in 1..=rollout_steps");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.max_grad_norm > 0.0) || !(self.divergence_limit > 0.0) {
            return bad("max_grad_norm and divergence_limit must be positive");
        }
        upmsp_core::scalarize(Default::default(), self.alpha, self.beta)?;
        self.policy.validate()?;
        Ok(())
    }

    fn loss(&self) -> LossConfig {
        LossConfig { clip: self.clip, value_coef: self.value_coef, entropy_coef: self.entropy_coef }
    }
}

/// Draws training instances uniformly over a set of generator cells with
/// fresh seeds, never reusing a held-out seed.
#[derive(Debug, Clone)]
pub struct InstanceSampler {
    cells: Vec<GenParams>,
    held_out: BTreeSet<u64>,
}

impl InstanceSampler {
    pub fn new(cells: Vec<GenParams>) -> Result<Self> {
        if cells.is_empty() {
            return Err(PpoError::Config("sampler needs at least one cell".into()));
        }
        for c in &cells {
            c.validate()?;
        }
        Ok(InstanceSampler { cells, held_out: BTreeSet::new() })
    }

    /// The full experimental grid for one problem size.
    pub fn grid(n: usize, m: usize) -> Result<Self> {
        Self::new(parameter_grid(n, m))
    }

    pub fn excluding(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.held_out.extend(seeds);
        self
    }

    pub fn cells(&self) -> &[GenParams] {
        &self.cells
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<ProblemInstance> {
        let cell = &self.cells[rng.gen_range(0..self.cells.len())];
        let seed = loop {
            let s = rng.gen::<u64>();
            if !self.held_out.contains(&s) {
                break s;
            }
        };
        Ok(generate_instance(&GenParams { seed, ..cell.clone() })?)
    }
}

/// Totals of one finished training episode. `ret` is in raw time units,
/// whatever the reward scaling used for learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub ret: f64,
    pub twt: i64,
    pub tst: i64,
}

/// One line of the learning curve. Episode means cover the episodes that
/// finished during the update's collection phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub steps: usize,
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub mean_twt: Option<f64>,
    pub mean_tst: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub row: CurveRow,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratio_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub curve: Vec<CurveRow>,
    pub episodes: Vec<EpisodeStats>,
}

/// CSV `update,steps,mean_return,mean_twt,mean_tst,lr`; empty cells for
/// updates in which no episode finished.
pub fn curve_csv(curve: &[CurveRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("update,steps,mean_return,mean_twt,mean_tst,lr\n");
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.update,
            r.steps,
            opt(r.mean_return),
            opt(r.mean_twt),
            opt(r.mean_tst),
            r.lr
        ));
    }
    out
}

/// Log-probabilities of the candidates (in `actions.actions` order) and the
/// state value.
pub fn score(params: &PolicyParams, graph: &HeteroGraph, actions: &ActionSet) -> Result<(Vec<f64>, f64)> {
    let batch = GraphBatch::single(graph, actions)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let heads = forward(&mut tape, params, &p, &batch)?;
    Ok((tape.value(heads.log_probs).data().to_vec(), tape.value(heads.values).item()))
}

fn sample_index<R: Rng>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, l) in log_probs.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// Welford accumulator over the discounted returns seen by all actors.
#[derive(Debug, Clone, Default)]
struct ReturnScale {
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScale {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2 / self.count).sqrt().max(1e-8)
    }
}

struct Actor {
    inst: ProblemInstance,
    reward: RewardConfig,
    state: EnvState,
    raw_return: f64,
    discounted: f64,
}

impl Actor {
    fn start(sampler: &InstanceSampler, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let inst = sampler.sample(rng)?;
        let mut reward = RewardConfig::new(cfg.alpha, cfg.beta);
        if cfg.scale_rewards {
            reward = reward.scaled_by_mean_processing(&inst);
        }
        let state = SchedulingEnv::reset(&inst, reward)?.into_state();
        Ok(Actor { inst, reward, state, raw_return: 0.0, discounted: 0.0 })
    }
}

/// One decision of `actor`; returns the transition and, if the episode
/// ended, its totals.
fn act(
    actor: &mut Actor,
    params: &PolicyParams,
    cfg: &TrainConfig,
    step: usize,
    scale: &mut ReturnScale,
    rng: &mut ChaCha8Rng,
) -> Result<(Transition, Option<EpisodeStats>)> {
    let state = std::mem::take(&mut actor.state);
    let mut env = SchedulingEnv::resume(&actor.inst, actor.reward, state);
    let actions = env.feasible_actions()?;
    let graph = build_graph(&actor.inst, env.state());
    let (log_probs, value) = score(params, &graph, &actions)?;
    let chosen = sample_index(&log_probs, rng);
    let res = env.step(actions.actions[chosen])?;
    actor.raw_return += reward(res.info.delta_twt as f64, res.info.setup as f64, cfg.alpha, cfg.beta);
    let mut r = res.reward;
    if cfg.normalize_rewards {
        actor.discounted = actor.discounted * cfg.gamma + r;
        scale.push(actor.discounted);
        r /= scale.std();
    }
    let finished = res.done.then(|| {
        let obj = env.state().objectives();
        EpisodeStats { ret: actor.raw_return, twt: obj.twt, tst: obj.tst }
    });
    actor.state = env.into_state();
    let t = Transition {
        graph,
        actions: actions.actions,
        chosen,
        log_prob: log_probs[chosen],
        value,
        reward: r,
        done: res.done,
        step,
    };
    Ok((t, finished))
}

fn bootstrap_value(actor: &Actor, params: &PolicyParams) -> Result<f64> {
    let env = SchedulingEnv::resume(&actor.inst, actor.reward, actor.state.clone());
    let actions = env.feasible_actions()?;
    let graph = build_graph(&actor.inst, env.state());
    Ok(score(params, &graph, &actions)?.1)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Parameters a run starts from; depends only on the policy shape and seed.
pub fn initial_params(cfg: &TrainConfig) -> Result<PolicyParams> {
    Ok(PolicyParams::init(cfg.policy, cfg.seed.wrapping_add(0x51_7cc1_b727_220a))?)
}

pub fn train(sampler: &InstanceSampler, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(sampler, cfg, |_, _| Ok(()))
}

/// Trains from scratch; `observe` runs after every update (logging,
/// checkpointing) and may abort the run by returning an error.
pub fn train_with<F>(sampler: &InstanceSampler, cfg: &TrainConfig, mut observe: F) -> Result<TrainOutput>
where
    F: FnMut(&UpdateReport, &PolicyParams) -> Result<()>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = initial_params(cfg)?;
    let mut flat = params.flat();
    let mut adam = Adam::new(flat.len(), AdamConfig { max_grad_norm: Some(cfg.max_grad_norm), ..AdamConfig::default() });
    let mut actors = (0..cfg.actors).map(|_| Actor::start(sampler, cfg, &mut rng)).collect::<Result<Vec<_>>>()?;
    let per_actor = cfg.rollout_steps / cfg.actors;
    let loss_cfg = cfg.loss();
    let mut scale = ReturnScale::default();

    let mut steps = 0usize;
    let mut curve = Vec::new();
    let mut all_episodes = Vec::new();
    let mut update = 0usize;
    while steps < cfg.total_steps {
        let lr = if cfg.lr_decay {
            cfg.learning_rate * (1.0 - steps as f64 / cfg.total_steps as f64)
        } else {
            cfg.learning_rate
        };
        let segment_len = per_actor.min((cfg.total_steps - steps).div_ceil(cfg.actors));

        let mut buffer: Vec<Transition> = Vec::with_capacity(segment_len * cfg.actors);
        let mut advantages = Vec::with_capacity(buffer.capacity());
        let mut returns = Vec::with_capacity(buffer.capacity());
        let mut finished = Vec::new();
        for actor in actors.iter_mut() {
            let start = buffer.len();
            for _ in 0..segment_len {
                let (t, ep) = act(actor, &params, cfg, steps, &mut scale, &mut rng)?;
                steps += 1;
                buffer.push(t);
                if let Some(ep) = ep {
                    finished.push(ep);
                    *actor = Actor::start(sampler, cfg, &mut rng)?;
                }
            }
            let seg = &buffer[start..];
            let last_done = seg.last().is_some_and(|t| t.done);
            let bootstrap = if last_done { 0.0 } else { bootstrap_value(actor, &params)? };
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seg.iter().map(|t| t.done).collect();
            let (a, r) = compute_gae(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.gae_lambda)?;
            advantages.extend(a);
            returns.extend(r);
        }
        normalize(&mut advantages);

        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let (mut pl, mut vl, mut ent, mut dev, mut batches) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch) {
                let batch: Vec<&Transition> = chunk.iter().map(|&i| &buffer[i]).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                let out = ppo_loss(&params, &batch, &adv, &ret, &loss_cfg)?;
                if out.ratio_deviation > cfg.divergence_limit {
                    return Err(PpoError::Diverged { update, deviation: out.ratio_deviation });
                }
                adam.step(&mut flat, &out.grad, lr)?;
                params.set_flat(&flat)?;
                pl += out.policy_loss;
                vl += out.value_loss;
                ent += out.entropy;
                dev += out.ratio_deviation;
                batches += 1;
            }
        }

        let row = CurveRow {
            update,
            steps,
            episodes: finished.len(),
            mean_return: mean(finished.iter().map(|e| e.ret)),
            mean_twt: mean(finished.iter().map(|e| e.twt as f64)),
            mean_tst: mean(finished.iter().map(|e| e.tst as f64)),
            lr,
        };
        let nb = batches.max(1) as f64;
        let report = UpdateReport {
            row: row.clone(),
            policy_loss: pl / nb,
            value_loss: vl / nb,
            entropy: ent / nb,
            ratio_deviation: dev / nb,
        };
        observe(&report, &params)?;
        curve.push(row);
        all_episodes.extend(finished);
        update += 1;
    }
    Ok(TrainOutput { params, curve, episodes: all_episodes })
}
