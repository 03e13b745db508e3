use serde::{Deserialize, Serialize};

use super::{GradientSet, Network, NnError, Result};

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.99,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators and step counter for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first: GradientSet,
    second: GradientSet,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        Self {
            config,
            first: GradientSet::zeros_for(net),
            second: GradientSet::zeros_for(net),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `net` along `grads`.
    ///
    /// Nothing is modified when `grads` holds a non-finite entry.
    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        if !grads.is_congruent(net) || !self.first.is_congruent(net) {
            return Err(NnError::DimensionMismatch {
                expected: net.num_parameters(),
                got: grads.to_flat().len(),
            });
        }
        if let Some(layer) = grads.first_non_finite_layer() {
            return Err(NnError::NonFiniteGradient { layer });
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        };
        for l in 0..net.num_layers() {
            update(
                &mut net.weights[l],
                &grads.weights[l],
                &mut self.first.weights[l],
                &mut self.second.weights[l],
            );
            update(
                &mut net.biases[l],
                &grads.biases[l],
                &mut self.first.biases[l],
                &mut self.second.biases[l],
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::Activation;
    use super::*;

    fn scalar_net(w: f64) -> Network {
        Network::from_parameters(&[1, 1], Activation::Relu, vec![vec![w]], vec![vec![0.0]])
            .unwrap()
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut net = Network::new(&[2, 8, 1], Activation::Tanh, 3).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let zero = GradientSet::zeros_for(&net);
        for _ in 0..5 {
            adam.step(&mut net, &zero).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(1.0);
        let mut adam = AdamState::new(
            &net,
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
        );
        let mut g = GradientSet::zeros_for(&net);
        g.weights[0][0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        let w = net.weights(0)[0];
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-15, "w = {w}");
        // bias had zero gradient
        assert_eq!(net.biases(0)[0], 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut net = Network::new(&[2, 4, 1], Activation::Relu, 1).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let mut g = GradientSet::zeros_for(&net);
        g.biases[1][0] = f64::NAN;
        let err = adam.step(&mut net, &g).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { layer: 1 }));
        assert_eq!(net, before);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut net = Network::new(&[2, 6, 1], Activation::Tanh, 8).unwrap();
            let mut adam = AdamState::new(&net, AdamConfig::default());
            for i in 0..10 {
                let g = net.backprop(&[0.1 * i as f64, -0.2], 1.0).unwrap();
                adam.step(&mut net, &g).unwrap();
            }
            net.parameters()
        };
        assert_eq!(run(), run());
    }
}
