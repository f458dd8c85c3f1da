use serde::{Deserialize, Serialize};

use super::params::{AgentParams, PolicyWeights};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3.5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam step. Returns the updated agent with its step
/// counter and parameter version advanced.
pub fn adam_update(agent: &AgentParams, grads: &PolicyWeights, cfg: &AdamConfig) -> Result<AgentParams> {
    if !agent.weights.same_shape(grads) {
        return Err(Error::DimensionMismatch { expected: agent.weights.num_params(), got: grads.num_params() });
    }
    grads.check_finite()?;

    let mut next = agent.clone();
    next.adam.step += 1;
    next.version += 1;
    let t = next.adam.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let params = next.weights.blocks_mut();
    let ms = next.adam.m.blocks_mut();
    let vs = next.adam.v.blocks_mut();
    for (((_, p), (_, m)), ((_, v), (_, g))) in params.into_iter().zip(ms).zip(vs.into_iter().zip(grads.blocks())) {
        for k in 0..p.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> AgentParams {
        let mut w = PolicyWeights::zeros(1);
        w.decoder.b2 = 0.25;
        AgentParams::new(w)
    }

    fn grad_on_b2(g: f64) -> PolicyWeights {
        let mut gr = PolicyWeights::zeros(1);
        gr.decoder.b2 = g;
        gr
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let a = adam_update(&agent(), &grad_on_b2(1.0), &cfg).unwrap();
        let delta = a.weights.decoder.b2 - 0.25;
        assert!((delta + cfg.lr / (1.0 + cfg.eps)).abs() < 1e-15);
        assert_eq!(a.adam.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let a0 = agent();
        let a = adam_update(&a0, &PolicyWeights::zeros(1), &AdamConfig::default()).unwrap();
        assert_eq!(a.weights, a0.weights);
        assert_eq!(a.adam.step, 1);
        assert_eq!(a.version, a0.version + 1);
    }

    #[test]
    fn two_steps_match_scalar_recursion() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let g = 0.3;
        let a = adam_update(&agent(), &grad_on_b2(g), &cfg).unwrap();
        let a = adam_update(&a, &grad_on_b2(g), &cfg).unwrap();

        let (mut theta, mut m, mut v) = (0.25_f64, 0.0_f64, 0.0_f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9_f64.powi(t));
            let v_hat = v / (1.0 - 0.999_f64.powi(t));
            theta -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        assert!((a.weights.decoder.b2 - theta).abs() < 1e-12);
        assert!((a.adam.m.decoder.b2 - m).abs() < 1e-12);
        assert!((a.adam.v.decoder.b2 - v).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut g = PolicyWeights::zeros(1);
        g.lstm.w_hidden[0] = f64::NAN;
        match adam_update(&agent(), &g, &AdamConfig::default()) {
            Err(Error::NonFinite(name)) => assert_eq!(name, "lstm.w_hidden"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
