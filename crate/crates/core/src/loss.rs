//! Output maps, cross-entropy losses and their terminal gradients.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::field::BatchState;
use crate::linalg::{axpy, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    BinarySigmoid,
    MulticlassSoftmax,
}

/// Targets stored row-major, `m × d_out`. Binary targets use `d_out = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    outputs: usize,
    values: Vec<f64>,
}

impl Labels {
    pub fn binary(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument("binary labels must be 0 or 1".into()));
        }
        Ok(Self { outputs: 1, values })
    }

    pub fn one_hot(classes: &[usize], outputs: usize) -> Result<Self> {
        let mut values = vec![0.0; classes.len() * outputs];
        for (i, &c) in classes.iter().enumerate() {
            if c >= outputs {
                return Err(Error::InvalidArgument(format!(
                    "class {c} out of range for {outputs} outputs"
                )));
            }
            values[i * outputs + c] = 1.0;
        }
        Ok(Self { outputs, values })
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn samples(&self) -> usize {
        self.values.len() / self.outputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.outputs..(i + 1) * self.outputs]
    }

    /// Class index of sample `i` (`0`/`1` for binary).
    pub fn class(&self, i: usize) -> usize {
        if self.outputs == 1 {
            (self.values[i] >= 0.5) as usize
        } else {
            argmax(self.row(i))
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let values = indices
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self {
            outputs: self.outputs,
            values,
        }
    }
}

/// Linear read-out `W_out` followed by sigmoid or softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHead {
    pub kind: HeadKind,
    pub w_out: DenseMatrix,
}

impl TaskHead {
    pub fn new(kind: HeadKind, w_out: DenseMatrix) -> Result<Self> {
        if kind == HeadKind::BinarySigmoid && w_out.rows() != 1 {
            return Err(Error::InvalidArgument(
                "binary head needs a single output row".into(),
            ));
        }
        Ok(Self { kind, w_out })
    }

    pub fn outputs(&self) -> usize {
        self.w_out.rows()
    }

    fn check(&self, x_t: &BatchState, labels: &Labels) -> Result<()> {
        check_len("head width", self.w_out.cols(), x_t.width())?;
        check_len("label outputs", self.outputs(), labels.outputs())?;
        check_len("label count", x_t.samples(), labels.samples())?;
        Ok(())
    }

    pub fn logits(&self, x_t: &BatchState) -> Vec<f64> {
        let mut out = vec![0.0; x_t.samples() * self.outputs()];
        for (xi, oi) in x_t.blocks().zip(out.chunks_exact_mut(self.outputs())) {
            self.w_out.mul_vec_into(xi, oi);
        }
        out
    }

    /// Mean negative log-likelihood.
    pub fn loss(&self, x_t: &BatchState, labels: &Labels) -> Result<f64> {
        self.check(x_t, labels)?;
        let logits = self.logits(x_t);
        let q = self.outputs();
        let total: f64 = logits
            .chunks_exact(q)
            .enumerate()
            .map(|(i, s)| match self.kind {
                HeadKind::BinarySigmoid => {
                    let (s, y) = (s[0], labels.row(i)[0]);
                    // softplus(s) − y·s
                    s.max(0.0) - y * s + (-s.abs()).exp().ln_1p()
                }
                HeadKind::MulticlassSoftmax => {
                    let lse = log_sum_exp(s);
                    labels
                        .row(i)
                        .iter()
                        .zip(s)
                        .map(|(y, sj)| y * (lse - sj))
                        .sum()
                }
            })
            .sum();
        Ok(total / x_t.samples() as f64)
    }

    /// Predicted probabilities, `m × d_out`.
    pub fn predict(&self, x_t: &BatchState) -> Vec<f64> {
        let mut probs = self.logits(x_t);
        match self.kind {
            HeadKind::BinarySigmoid => probs.iter_mut().for_each(|s| *s = sigmoid(*s)),
            HeadKind::MulticlassSoftmax => probs
                .chunks_exact_mut(self.outputs())
                .for_each(softmax_in_place),
        }
        probs
    }

    /// `∂loss/∂xᵢ(T) = (1/m) W_outᵀ (ŷⁱ − yⁱ)`.
    pub fn terminal_gradient(&self, x_t: &BatchState, labels: &Labels) -> Result<BatchState> {
        self.check(x_t, labels)?;
        let residual = self.output_residual(x_t, labels);
        let mut grad = BatchState::zeros(x_t.samples(), x_t.width());
        for (ri, gi) in residual
            .chunks_exact(self.outputs())
            .zip(grad.as_mut_slice().chunks_exact_mut(x_t.width()))
        {
            self.w_out.mul_transpose_vec_into(ri, gi);
        }
        Ok(grad)
    }

    /// `∂loss/∂W_out = (1/m) Σᵢ (ŷⁱ − yⁱ)(xⁱ(T))ᵀ`.
    pub fn output_weight_gradient(&self, x_t: &BatchState, labels: &Labels) -> Result<DenseMatrix> {
        self.check(x_t, labels)?;
        let residual = self.output_residual(x_t, labels);
        let (q, d) = (self.outputs(), x_t.width());
        let mut grad = DenseMatrix::zeros(q, d);
        for (ri, xi) in residual.chunks_exact(q).zip(x_t.blocks()) {
            for (r, &rv) in ri.iter().enumerate() {
                axpy(rv, xi, &mut grad.entries_mut()[r * d..(r + 1) * d]);
            }
        }
        Ok(grad)
    }

    /// `(ŷ − y)/m`, row-major.
    fn output_residual(&self, x_t: &BatchState, labels: &Labels) -> Vec<f64> {
        let inv_m = 1.0 / x_t.samples() as f64;
        let mut probs = self.predict(x_t);
        for (i, row) in probs.chunks_exact_mut(self.outputs()).enumerate() {
            for (p, y) in row.iter_mut().zip(labels.row(i)) {
                *p = (*p - y) * inv_m;
            }
        }
        probs
    }

    /// Fraction of correctly classified samples.
    pub fn accuracy(&self, x_t: &BatchState, labels: &Labels) -> Result<f64> {
        self.check(x_t, labels)?;
        let logits = self.logits(x_t);
        let q = self.outputs();
        let correct = logits
            .chunks_exact(q)
            .enumerate()
            .filter(|(i, s)| {
                let predicted = match self.kind {
                    HeadKind::BinarySigmoid => (s[0] > 0.0) as usize,
                    HeadKind::MulticlassSoftmax => argmax(s),
                };
                predicted == labels.class(*i)
            })
            .count();
        Ok(correct as f64 / x_t.samples() as f64)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    s.iter_mut().for_each(|v| *v = (*v - max).exp());
    let total: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= total);
}

/// Lowest index among maximal entries.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
