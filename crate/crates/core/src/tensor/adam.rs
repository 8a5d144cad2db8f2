use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Bias-corrected Adam with zero-initialized moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        Ok(Adam {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Updates every trainable parameter from its accumulated gradient.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (name, t) in params.iter_mut() {
            if t.is_trainable() && t.grad().is_none() {
                return Err(Error::MissingGrad(name.to_string()));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (i, (_, tensor)) in params.iter_mut().enumerate() {
            if !tensor.is_trainable() {
                continue;
            }
            let grad = tensor.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            if m.len() != grad.len() {
                return Err(Error::invalid("adam", format!("moment layout does not match tensor {i}")));
            }
            for (j, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut p = ParamSet::new();
        let id = p.add("w", Tensor::scalar(value).requires_grad());
        p.get_mut(id).accumulate_grad(&[grad]).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = single(1.0, g);
            let mut adam = Adam::new(AdamConfig { learning_rate: 0.01, ..Default::default() }, &p).unwrap();
            adam.step(&mut p).unwrap();
            let w = p.get(ParamId(0)).data()[0];
            assert!(((1.0 - w).abs() - 0.01).abs() < 1e-6, "g={g} w={w}");
            assert_eq!(adam.step_count(), 1);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = single(0.25, 0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.get(ParamId(0)).data()[0], 0.25);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::scalar(1.0).requires_grad());
        let mut adam = Adam::new(AdamConfig::default(), &p).unwrap();
        assert!(matches!(adam.step(&mut p), Err(Error::MissingGrad(n)) if n == "w"));
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        let p = ParamSet::new();
        assert!(Adam::new(AdamConfig { learning_rate: 0.0, ..Default::default() }, &p).is_err());
        assert!(Adam::new(AdamConfig { beta1: 1.0, ..Default::default() }, &p).is_err());
    }

    use super::super::ParamId;
}
