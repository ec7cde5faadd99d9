use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 strength: the update sees `grad + 2·l2_lambda·θ`.
    pub l2_lambda: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2_lambda: 0.0,
        }
    }
}

/// Moment buffers for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Bias-corrected Adam with coupled L2 regularization.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let states = params
            .iter()
            .map(|p| AdamState {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            })
            .collect();
        Self { config, states, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<Vec<f64>>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != params.len() {
            return Err(Error::contract(
                "adam_step",
                format!(
                    "optimizer tracks {} parameters, got {} parameters and {} gradients",
                    self.states.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            match g {
                None => {
                    return Err(Error::contract(
                        "adam_step",
                        format!("gradient of parameter {i} was never populated"),
                    ))
                }
                Some(g) if g.len() != p.len() => {
                    return Err(Error::shape(
                        "adam_step",
                        format!("parameter {i} has {} values but gradient has {}", p.len(), g.len()),
                    ))
                }
                _ => {}
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            l2_lambda,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), st) in params.iter_mut().zip(grads).zip(&mut self.states) {
            let g = g.as_deref().expect("checked above");
            for (((theta, gi), m), v) in p.data_mut().iter_mut().zip(g).zip(&mut st.m).zip(&mut st.v) {
                let gi = gi + 2.0 * l2_lambda * *theta;
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar(0.7);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            opt.step(&mut p, &[Some(vec![0.0])]).unwrap();
        }
        assert_eq!(p[0].data()[0], 0.7);
        assert_eq!(opt.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[Some(vec![0.5])]).unwrap();
        let expected = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert_eq!(p[0].data()[0], expected);
        assert!((p[0].data()[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn matches_hand_rolled_trace_on_quadratic() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut p = scalar(1.5);
        let mut opt = Adam::new(cfg, &p);
        let (mut theta, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * theta;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let grad = 2.0 * p[0].data()[0];
            opt.step(&mut p, &[Some(vec![grad])]).unwrap();
            assert!((p[0].data()[0] - theta).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn l2_is_coupled_into_the_gradient() {
        let cfg = AdamConfig {
            l2_lambda: 0.25,
            ..AdamConfig::default()
        };
        let mut p = scalar(2.0);
        let mut opt = Adam::new(cfg, &p);
        // 2·0.25·2 = 1 added to a zero gradient: a full-size step downhill.
        opt.step(&mut p, &[Some(vec![0.0])]).unwrap();
        assert!((p[0].data()[0] - (2.0 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut p = scalar(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(matches!(opt.step(&mut p, &[None]), Err(Error::Contract { .. })));
        assert_eq!(opt.steps(), 0);
    }
}
