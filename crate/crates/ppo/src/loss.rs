//! Clipped PPO objective on the autodiff tape.

use upmsp_core::{Action, HeteroGraph};
use upmsp_nn::{forward, GraphBatch, PolicyParams, Tape, Tensor};

use crate::error::{PpoError, Result};

/// One decision recorded during collection.
#[derive(Debug, Clone)]
pub struct Transition {
    pub graph: HeteroGraph,
    /// Candidates in the order the policy scored them.
    pub actions: Vec<Action>,
    pub chosen: usize,
    /// Log-probability of `chosen` under the collecting policy.
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// Global environment step, for error messages.
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { clip: 0.2, value_coef: 0.5, entropy_coef: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `|ρ − 1|` over the minibatch.
    pub ratio_deviation: f64,
    /// Gradient of `loss` in the parameter layout of [`PolicyParams::flat`].
    pub grad: Vec<f64>,
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clipped * advantage)
}

/// `−mean(surrogate) + c_v·mean((V − R)²) − c_e·mean(entropy)` over the
/// minibatch, with its gradient. Advantages are used as given.
pub fn ppo_loss(
    params: &PolicyParams,
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &LossConfig,
) -> Result<LossOutput> {
    let b = batch.len();
    if b == 0 || advantages.len() != b || returns.len() != b {
        return Err(PpoError::Length(format!(
            "batch {b}, advantages {}, returns {}",
            advantages.len(),
            returns.len()
        )));
    }
    let graphs: Vec<&HeteroGraph> = batch.iter().map(|t| &t.graph).collect();
    let actions: Vec<&[Action]> = batch.iter().map(|t| t.actions.as_slice()).collect();
    let gb = GraphBatch::new(&graphs, &actions)?;

    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let heads = forward(&mut tape, params, &p, &gb)?;
    let chosen: Vec<usize> = batch.iter().zip(gb.offsets()).map(|(t, off)| off + t.chosen).collect();
    let new_logp = tape.gather_rows(heads.log_probs, &chosen)?;
    let old_logp = tape.constant(Tensor::column(batch.iter().map(|t| t.log_prob).collect()));
    let diff = tape.sub(new_logp, old_logp)?;
    let ratio = tape.exp(diff);
    let mut deviation = 0.0;
    for (t, r) in batch.iter().zip(tape.value(ratio).data()) {
        if !r.is_finite() {
            return Err(PpoError::NonFiniteRatio { step: t.step });
        }
        deviation += (r - 1.0).abs();
    }

    let adv = tape.constant(Tensor::column(advantages.to_vec()));
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let clipped = tape.mul(clipped_ratio, adv)?;
    let surrogate = tape.minimum(unclipped, clipped)?;
    let surrogate = tape.mean(surrogate);
    let policy_loss = tape.scale(surrogate, -1.0);

    let targets = tape.constant(Tensor::column(returns.to_vec()));
    let err = tape.sub(heads.values, targets)?;
    let sq = tape.mul(err, err)?;
    let value_loss = tape.mean(sq);

    let probs = tape.exp(heads.log_probs);
    let plogp = tape.mul(probs, heads.log_probs)?;
    let neg_entropy_sum = tape.sum(plogp);
    let entropy = tape.scale(neg_entropy_sum, -1.0 / b as f64);

    let v_term = tape.scale(value_loss, cfg.value_coef);
    let e_term = tape.scale(entropy, -cfg.entropy_coef);
    let total = tape.add(policy_loss, v_term)?;
    let total = tape.add(total, e_term)?;

    let grads = tape.backward(total)?;
    Ok(LossOutput {
        loss: tape.value(total).item(),
        policy_loss: tape.value(policy_loss).item(),
        value_loss: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        ratio_deviation: deviation / b as f64,
        grad: params.flat_grad(&grads, &p),
    })
}
