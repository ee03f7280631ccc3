use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AdamError {
    #[error("parameter {index}: shape {param:?} but gradient {grad:?}")]
    ShapeMismatch {
        index: usize,
        param: (usize, usize),
        grad: (usize, usize),
    },
    #[error("expected {expected} parameters, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor2>,
    pub second_moment: Vec<Tensor2>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor2>, config: AdamConfig) -> Self {
        let first_moment: Vec<Tensor2> = params
            .into_iter()
            .map(|p| Tensor2::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
        }
    }

    pub fn reset(&mut self) {
        for m in self
            .first_moment
            .iter_mut()
            .chain(self.second_moment.iter_mut())
        {
            m.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self.step_count = 0;
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor2],
        grads: &[&Tensor2],
        learning_rate: f64,
    ) -> Result<(), AdamError> {
        if learning_rate.is_nan() || learning_rate <= 0.0 {
            return Err(AdamError::LearningRate(learning_rate));
        }
        let expected = self.first_moment.len();
        if params.len() != expected || grads.len() != expected {
            return Err(AdamError::CountMismatch {
                expected,
                got: params.len().min(grads.len()),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[index].shape() {
                return Err(AdamError::ShapeMismatch {
                    index,
                    param: p.shape(),
                    grad: g.shape(),
                });
            }
        }
        self.step_count += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((w, &gr), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gr;
                *vi = beta2 * *vi + (1.0 - beta2) * gr * gr;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
