//! Adam (and a plain gradient-descent fallback) on flattened nodal controls.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::h1::RieszGradient;
use crate::trajectory::ControlPath;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, len: usize) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// In-place update of a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len("optimizer parameters", self.len(), params.len())?;
        check_len("optimizer gradient", self.len(), grad.len())?;
        self.step += 1;
        match self.kind {
            OptimizerKind::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }

    /// Applies one update to the nodal controls.
    pub fn step(&mut self, theta: &ControlPath, gradient: &RieszGradient) -> Result<ControlPath> {
        let mut flat = theta.flatten();
        self.step_flat(&mut flat, &gradient.flatten())?;
        ControlPath::from_flat(theta.grid().clone(), theta.width(), &flat)
    }

    /// Zeroes all statistics and grows the moment arrays by `extra` entries.
    pub fn on_insert(&mut self, extra: usize) {
        let len = self.len() + extra;
        self.reset(len);
    }

    pub fn reset(&mut self, len: usize) {
        self.step = 0;
        self.first_moment = vec![0.0; len];
        self.second_moment = vec![0.0; len];
    }
}
