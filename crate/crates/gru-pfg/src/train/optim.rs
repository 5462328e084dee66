//! Parameter update rules: Adam and plain SGD, with optional global-norm
//! gradient clipping. Frozen parameters are never touched.

use std::collections::BTreeMap;

use crate::model::params::ParamSet;
use crate::scalar::Scalar;

use super::config::{OptimizerKind, TrainConfig};

pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    clip: Option<T>,
    step_count: u32,
    /// First and second moment buffers per parameter name (Adam only).
    moments: BTreeMap<&'static str, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: &TrainConfig) -> Self {
        Optimizer {
            kind: config.optimizer,
            lr: T::from_f64_lossy(config.learning_rate),
            beta1: T::from_f64_lossy(config.adam_beta1),
            beta2: T::from_f64_lossy(config.adam_beta2),
            eps: T::from_f64_lossy(config.adam_eps),
            clip: config.grad_clip_norm.map(T::from_f64_lossy),
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Apply one update from the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut impl ParamSet<T>) {
        let scale = match self.clip {
            Some(clip) => {
                let mut sq = T::zero();
                params.visit(&mut |_, t| {
                    if t.trainable {
                        for &g in &t.grad {
                            sq += g * g;
                        }
                    }
                });
                let norm = sq.sqrt();
                if norm > clip {
                    clip / norm
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };

        self.step_count += 1;
        let one = T::one();
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr;
                params.visit_mut(&mut |_, t| {
                    if !t.trainable {
                        return;
                    }
                    for (v, &g) in t.values.iter_mut().zip(&t.grad) {
                        *v = *v - lr * scale * g;
                    }
                });
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let bias1 = one - b1.powi(self.step_count as i32);
                let bias2 = one - b2.powi(self.step_count as i32);
                let (lr, eps) = (self.lr, self.eps);
                let moments = &mut self.moments;
                params.visit_mut(&mut |name, t| {
                    if !t.trainable {
                        return;
                    }
                    let (m, v) = moments
                        .entry(name)
                        .or_insert_with(|| (vec![T::zero(); t.len()], vec![T::zero(); t.len()]));
                    for i in 0..t.len() {
                        let g = t.grad[i] * scale;
                        m[i] = b1 * m[i] + (one - b1) * g;
                        v[i] = b2 * v[i] + (one - b2) * g * g;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        t.values[i] = t.values[i] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                });
            }
        }
    }
}
