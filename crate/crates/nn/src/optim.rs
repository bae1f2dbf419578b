//! Adam with bias correction and optional global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global L2 norm exceeds this; `None` disables.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: Some(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Adam { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of `params` in place. Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<f64> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NnError::Shape { op: "adam", left: (self.m.len(), 1), right: (grad.len(), 1) });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(NnError::NonFinite(format!("gradient norm {norm}")));
        }
        let scale = match self.config.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut adam = Adam::new(2, AdamConfig { max_grad_norm: None, ..AdamConfig::default() });
        let mut p = vec![1.0, 1.0];
        adam.step(&mut p, &[3.0, -0.5], 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_leaves_params_bit_identical() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let mut p = vec![0.1, -2.0, 3.5];
        let before = p.clone();
        adam.step(&mut p, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::new(1, AdamConfig { max_grad_norm: None, ..AdamConfig::default() });
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            adam.step(&mut p, &g, 0.05).unwrap();
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_errors() {
        let mut adam = Adam::new(1, AdamConfig::default());
        assert!(adam.step(&mut [0.0], &[f64::NAN], 0.1).is_err());
    }
}
