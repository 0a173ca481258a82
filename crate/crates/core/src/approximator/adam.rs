use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Gradients, Module};
use crate::math::{powi, sqrt};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one module, block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new<M: Module>(config: AdamConfig, module: &M) -> Self {
        let sizes: Vec<usize> = module.blocks().iter().map(|b| b.len()).collect();
        Self {
            config,
            state: AdamState {
                step: 0,
                first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
                second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            },
        }
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    /// One bias-corrected update of `module` in place.
    pub fn step<M: Module>(&mut self, module: &mut M, grads: &Gradients) -> Result<()> {
        let blocks = module.blocks_mut();
        if blocks.len() != grads.len() || blocks.len() != self.state.first.len() {
            return Err(Error::Shape {
                expected: self.state.first.len(),
                actual: grads.len(),
            });
        }
        for ((b, g), m) in blocks.iter().zip(grads).zip(&self.state.first) {
            if b.len() != g.len() || b.len() != m.len() {
                return Err(Error::Shape {
                    expected: b.len(),
                    actual: g.len(),
                });
            }
        }
        self.state.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.state.step as i32;
        let c1 = 1.0 - powi(beta1, t);
        let c2 = 1.0 - powi(beta2, t);
        for (((params, g), m), v) in blocks
            .into_iter()
            .zip(grads)
            .zip(self.state.first.iter_mut())
            .zip(self.state.second.iter_mut())
        {
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                params[i] -= learning_rate * m_hat / (sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{Activation, DenseNetwork, LayerSpec};
    use crate::rng::seeded;

    fn net() -> DenseNetwork {
        DenseNetwork::init(
            &[LayerSpec {
                input: 2,
                output: 1,
                activation: Activation::Identity,
            }],
            1.0,
            &mut seeded(0, 0),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut n = net();
        let before = n.clone();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        let g = n.zero_gradients();
        for _ in 0..10 {
            opt.step(&mut n, &g).unwrap();
        }
        assert_eq!(n, before);
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut n = net();
        let before = n.params().to_vec();
        let mut opt = Adam::new(AdamConfig::with_lr(0.001), &n);
        let g = vec![vec![1.0; n.param_count()]];
        opt.step(&mut n, &g).unwrap();
        // m_hat = 1, v_hat = 1: delta = -lr / (1 + eps)
        for (a, b) in n.params().iter().zip(&before) {
            assert!((a - b + 0.001).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_gradient_descends() {
        let mut n = net();
        let before = n.params().to_vec();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        let g = vec![vec![-0.3, 2.0, 0.7]];
        for _ in 0..50 {
            opt.step(&mut n, &g).unwrap();
        }
        for ((a, b), gi) in n.params().iter().zip(&before).zip(&g[0]) {
            assert!((a - b) * gi < 0.0);
        }
    }

    #[test]
    fn mismatched_gradients() {
        let mut n = net();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        assert!(opt.step(&mut n, &vec![vec![1.0; 2]]).is_err());
        assert_eq!(opt.step_count(), 0);
    }
}
