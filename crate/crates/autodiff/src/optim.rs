use std::collections::BTreeMap;

use crate::{Error, ParamSet, Result};

/// Which update rule an [`Optimizer`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain gradient descent: `p -= lr · g`.
    Sgd,
    /// Adaptive-moment estimation with bias correction.
    Adam,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First-order optimizer over a [`ParamSet`].
///
/// `step` reads each parameter's gradient and updates the values in place;
/// gradients are left untouched for the caller to clear.
pub struct Optimizer {
    kind: OptimizerKind,
    config: OptimizerConfig,
    // Adam first/second moments, keyed by parameter name.
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, config: OptimizerConfig) -> Self {
        Optimizer {
            kind,
            config,
            moments: BTreeMap::new(),
            steps: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::new(
            OptimizerKind::Sgd,
            OptimizerConfig {
                learning_rate,
                ..OptimizerConfig::default()
            },
        )
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::new(
            OptimizerKind::Adam,
            OptimizerConfig {
                learning_rate,
                ..OptimizerConfig::default()
            },
        )
    }

    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for p in params.iter() {
            if p.tensor.grad.is_none() {
                return Err(Error::Contract(format!(
                    "optimizer step with missing gradient for parameter {:?}",
                    p.name
                )));
            }
        }
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let grad = p.tensor.grad.as_ref().unwrap().clone();
                    for (v, g) in p.tensor.values.iter_mut().zip(&grad) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let bias1 = 1.0 - b1.powi(self.steps as i32);
                let bias2 = 1.0 - b2.powi(self.steps as i32);
                for p in params.iter_mut() {
                    let n = p.tensor.values.len();
                    let (m, v) = self
                        .moments
                        .entry(p.name.clone())
                        .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
                    let grad = p.tensor.grad.as_ref().unwrap();
                    for i in 0..n {
                        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        p.tensor.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        for p in params.iter() {
            if p.tensor.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("parameter {:?} after optimizer step", p.name),
                });
            }
        }
        Ok(())
    }
}
