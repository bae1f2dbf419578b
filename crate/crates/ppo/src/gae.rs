//! Generalized advantage estimation over one actor's contiguous segment.

use crate::error::{PpoError, Result};

/// Advantages and value targets for a segment of consecutive steps.
///
/// `dones[t]` marks that the episode ended with step `t`; the next state's
/// value is then 0. `bootstrap` is the value of the state after the last step
/// and is only used when that step did not end an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(PpoError::Length(format!(
            "rewards {}, values {}, dones {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let len = rewards.len();
    let mut adv = vec![0.0; len];
    let mut running = 0.0;
    for t in (0..len).rev() {
        let next_value = if dones[t] {
            0.0
        } else if t + 1 < len {
            values[t + 1]
        } else {
            bootstrap
        };
        if dones[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Rescales to mean 0 and standard deviation 1 in place.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in values {
        *v = (*v - mean) / std;
    }
}
