//! The neural vector field `f(v, θ) = σ(W v + b)`, its batched form and its
//! adjoint products. All derivatives are analytic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix};

/// Samples per work unit in batched kernels. Fixed so reductions are summed
/// in the same order regardless of the thread count.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn second_derivative(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    pub fn third_derivative(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                let s = 1.0 - t * t;
                -2.0 * s * s + 4.0 * t * t * s
            }
        }
    }
}

/// Parameter vector `θ = (vec W, b)` of length `d² + d`, where `vec` stacks
/// the columns of `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVec {
    width: usize,
    data: Vec<f64>,
}

pub fn param_len(width: usize) -> usize {
    width * width + width
}

impl ThetaVec {
    pub fn zeros(width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; param_len(width)],
        }
    }

    pub fn from_vec(width: usize, data: Vec<f64>) -> Result<Self> {
        check_len("ThetaVec", param_len(width), data.len())?;
        Ok(Self { width, data })
    }

    /// Packs a `d×d` weight matrix and a bias of length `d`.
    pub fn pack(w: &DenseMatrix, b: &[f64]) -> Result<Self> {
        let d = b.len();
        check_len("ThetaVec::pack rows", d, w.rows())?;
        check_len("ThetaVec::pack cols", d, w.cols())?;
        let mut data = vec![0.0; param_len(d)];
        for j in 0..d {
            for i in 0..d {
                data[j * d + i] = w[(i, j)];
            }
        }
        data[d * d..].copy_from_slice(b);
        Ok(Self { width: d, data })
    }

    pub fn unpack(&self) -> (DenseMatrix, Vec<f64>) {
        let d = self.width;
        let mut w = DenseMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                w[(i, j)] = self.data[j * d + i];
            }
        }
        (w, self.bias().to_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Column `j` of `W`.
    #[inline]
    pub fn weight_column(&self, j: usize) -> &[f64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    #[inline]
    pub fn bias(&self) -> &[f64] {
        &self.data[self.width * self.width..]
    }

    /// `(1-w)·a + w·b`
    pub fn lerp(a: &ThetaVec, b: &ThetaVec, w: f64) -> ThetaVec {
        debug_assert_eq!(a.width, b.width);
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        ThetaVec {
            width: a.width,
            data,
        }
    }

    /// `(a + b) / 2`
    pub fn midpoint(a: &ThetaVec, b: &ThetaVec) -> ThetaVec {
        debug_assert_eq!(a.width, b.width);
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        ThetaVec {
            width: a.width,
            data,
        }
    }
}

/// Batch of `m` hidden states stored contiguously, sample `i` in block `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchState {
    width: usize,
    data: Vec<f64>,
}

impl BatchState {
    pub fn zeros(samples: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; samples * width],
        }
    }

    pub fn from_vec(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || !data.len().is_multiple_of(width) {
            return Err(Error::DimensionMismatch {
                context: "BatchState",
                expected: width,
                actual: data.len(),
            });
        }
        Ok(Self { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn samples(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.width)
    }

    /// Batch norm `‖x‖² = Σᵢ ‖xⁱ‖²`, returned as `‖x‖`.
    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// `‖self − other‖`
    pub fn distance(&self, other: &BatchState) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &BatchState) {
        axpy(alpha, &other.data, &mut self.data);
    }
}

/// The single-layer field with a fixed width `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuralField {
    pub width: usize,
    pub activation: Activation,
}

impl NeuralField {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            activation: Activation::Tanh,
        }
    }

    pub fn param_len(&self) -> usize {
        param_len(self.width)
    }

    fn check(&self, x: &BatchState, theta: &ThetaVec) -> Result<()> {
        check_len("state width", self.width, x.width)?;
        check_len("parameter width", self.width, theta.width)?;
        Ok(())
    }

    /// `pre = W v + b`
    #[inline]
    fn preactivation(&self, theta: &ThetaVec, v: &[f64], pre: &mut [f64]) {
        pre.copy_from_slice(theta.bias());
        for (j, &vj) in v.iter().enumerate() {
            axpy(vj, theta.weight_column(j), pre);
        }
    }

    /// Block `i` of the output is `σ(W xⁱ + b)`.
    pub fn eval(&self, x: &BatchState, theta: &ThetaVec) -> Result<BatchState> {
        self.check(x, theta)?;
        let d = self.width;
        let mut out = BatchState::zeros(x.samples(), d);
        out.data
            .par_chunks_mut(CHUNK * d)
            .zip(x.data.par_chunks(CHUNK * d))
            .for_each(|(o, xs)| {
                for (oi, xi) in o.chunks_exact_mut(d).zip(xs.chunks_exact(d)) {
                    self.preactivation(theta, xi, oi);
                    oi.iter_mut().for_each(|v| *v = self.activation.eval(*v));
                }
            });
        Ok(out)
    }

    /// Block `i` of the output is `Wᵀ (σ′(W xⁱ + b) ⊙ pⁱ)`.
    pub fn vjp_state(&self, x: &BatchState, theta: &ThetaVec, p: &BatchState) -> Result<BatchState> {
        self.check(x, theta)?;
        check_len("vjp_state adjoint", x.data.len(), p.data.len())?;
        let d = self.width;
        let mut out = BatchState::zeros(x.samples(), d);
        out.data
            .par_chunks_mut(CHUNK * d)
            .zip(x.data.par_chunks(CHUNK * d))
            .zip(p.data.par_chunks(CHUNK * d))
            .for_each(|((o, xs), ps)| {
                let mut s = vec![0.0; d];
                for ((oi, xi), pi) in o
                    .chunks_exact_mut(d)
                    .zip(xs.chunks_exact(d))
                    .zip(ps.chunks_exact(d))
                {
                    self.preactivation(theta, xi, &mut s);
                    for (sk, pk) in s.iter_mut().zip(pi) {
                        *sk = self.activation.derivative(*sk) * pk;
                    }
                    for (j, oj) in oi.iter_mut().enumerate() {
                        *oj = dot(theta.weight_column(j), &s);
                    }
                }
            });
        Ok(out)
    }

    /// Parameter adjoint `D₂F(x, θ)* p`: W-part `vec(Σᵢ sⁱ (xⁱ)ᵀ)`, b-part
    /// `Σᵢ sⁱ`, with `sⁱ = σ′(W xⁱ + b) ⊙ pⁱ`.
    pub fn vjp_params(&self, x: &BatchState, theta: &ThetaVec, p: &BatchState) -> Result<ThetaVec> {
        self.check(x, theta)?;
        check_len("vjp_params adjoint", x.data.len(), p.data.len())?;
        let d = self.width;
        let partials: Vec<Vec<f64>> = x
            .data
            .par_chunks(CHUNK * d)
            .zip(p.data.par_chunks(CHUNK * d))
            .map(|(xs, ps)| {
                let mut acc = vec![0.0; param_len(d)];
                let mut s = vec![0.0; d];
                for (xi, pi) in xs.chunks_exact(d).zip(ps.chunks_exact(d)) {
                    self.preactivation(theta, xi, &mut s);
                    for (sk, pk) in s.iter_mut().zip(pi) {
                        *sk = self.activation.derivative(*sk) * pk;
                    }
                    let (w_part, b_part) = acc.split_at_mut(d * d);
                    for (j, &xj) in xi.iter().enumerate() {
                        axpy(xj, &s, &mut w_part[j * d..(j + 1) * d]);
                    }
                    axpy(1.0, &s, b_part);
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; param_len(d)];
        for part in &partials {
            axpy(1.0, part, &mut total);
        }
        Ok(ThetaVec {
            width: d,
            data: total,
        })
    }
}
