//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }
}

/// One Adam update on a flat parameter slice. `t` is the 1-based step count.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: usize,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Apply one Adam step to every trainable parameter of a network. Aborts
/// with diagnostics on a non-finite gradient.
pub fn adam_step(net: &mut Network, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    state.step += 1;
    let t = state.step;
    let mut idx = 0;
    let mut failure: Option<Error> = None;
    let (m_all, v_all) = (&mut state.m, &mut state.v);
    net.visit_params(&mut |name, param, grad| {
        if failure.is_some() {
            return;
        }
        if !grad.is_finite() {
            failure = Some(Error::NonFinite {
                quantity: "gradient".into(),
                layer: name.to_string(),
                step: t,
            });
            return;
        }
        if m_all.len() <= idx {
            m_all.push(vec![0.0; param.len()]);
            v_all.push(vec![0.0; param.len()]);
        }
        adam_update(&mut param.data, &grad.data, &mut m_all[idx], &mut v_all[idx], t, cfg);
        idx += 1;
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0, -2.0, 3.5];
        let orig = p.clone();
        let mut m = vec![0.0; 3];
        let mut v = vec![0.0; 3];
        for t in 1..=100 {
            adam_update(&mut p, &[0.0; 3], &mut m, &mut v, t, &cfg);
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // closed form: m_hat = g, v_hat = g^2, so |delta| = lr * |g|/(|g|+eps)
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        for &g in &[1e-3, 0.5, -2.0, 40.0] {
            let mut p = vec![0.0];
            let mut m = vec![0.0];
            let mut v = vec![0.0];
            adam_update(&mut p, &[g], &mut m, &mut v, 1, &cfg);
            assert!((p[0].abs() - cfg.learning_rate).abs() < 1e-5, "g={g} gave {}", p[0]);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // direct simulation of f(w) = ||w||^2 from ||w0|| = 1
        let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
        let mut w = vec![0.6, -0.8];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        for t in 1..=500 {
            let grad: Vec<f64> = w.iter().map(|&x| 2.0 * x).collect();
            adam_update(&mut w, &grad, &mut m, &mut v, t, &cfg);
        }
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!(norm < 1e-3, "final norm {norm}");
    }
}
