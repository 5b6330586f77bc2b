//! CG(1) finite-element machinery for the control: hat-function mass and
//! stiffness matrices and the discrete H¹ Riesz gradient
//! `(B⊗I) g = λ (B⊗I) Θ + (M⊗I) z`.

use crate::error::{check_len, Error, Result};
use crate::field::{BatchState, NeuralField, ThetaVec};
use crate::grid::TimeGrid;
use crate::linalg::{dot, solve_tridiagonal, TridiagonalMatrix};
use crate::trajectory::{AdjointTrajectory, ControlPath, StateTrajectory};

/// Stiffness `A`, mass `M` and `B = A + M` for the hat basis, both boundary
/// nodes included.
#[derive(Clone, Debug, PartialEq)]
pub struct FemMatrices {
    pub stiffness: TridiagonalMatrix,
    pub mass: TridiagonalMatrix,
    pub combined: TridiagonalMatrix,
}

pub fn assemble_fem(grid: &TimeGrid) -> FemMatrices {
    let n = grid.node_count();
    let mut a_main = vec![0.0; n];
    let mut a_off = vec![0.0; n - 1];
    let mut m_main = vec![0.0; n];
    let mut m_off = vec![0.0; n - 1];
    for k in 1..=grid.intervals() {
        let tau = grid.tau(k);
        a_main[k - 1] += 1.0 / tau;
        a_main[k] += 1.0 / tau;
        a_off[k - 1] -= 1.0 / tau;
        m_main[k - 1] += tau / 3.0;
        m_main[k] += tau / 3.0;
        m_off[k - 1] += tau / 6.0;
    }
    let stiffness = TridiagonalMatrix::new(a_off.clone(), a_main, a_off).unwrap();
    let mass = TridiagonalMatrix::new(m_off.clone(), m_main, m_off).unwrap();
    let combined = stiffness.add(&mass).unwrap();
    FemMatrices {
        stiffness,
        mass,
        combined,
    }
}

/// Nodal values of the continuous piecewise-linear reconstruction through
/// the interval midpoints. Interior nodes interpolate between `pᵏ` and
/// `p^{k+1}`; the end nodes are clamped to `p¹` and `pᴷ`.
pub fn reconstruct_adjoint_at_nodes(p: &AdjointTrajectory) -> Vec<BatchState> {
    let grid = &p.grid;
    let k_max = grid.intervals();
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(p.values[1].clone());
    for k in 1..k_max {
        let (left, right) = (grid.tau(k), grid.tau(k + 1));
        let (wl, wr) = (right / (left + right), left / (left + right));
        let data = p.values[k]
            .as_slice()
            .iter()
            .zip(p.values[k + 1].as_slice())
            .map(|(a, b)| wl * a + wr * b)
            .collect();
        out.push(BatchState::from_vec(p.values[k].width(), data).unwrap());
    }
    out.push(p.values[k_max].clone());
    out
}

/// `zᵏ = D₂F(x^{k−1}, θᵏ)* p̂ᵏ` for `k ≥ 1`, `z⁰ = D₂F(x⁰, θ⁰)* p̂⁰`.
pub fn assemble_z(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    p_hat: &[BatchState],
) -> Result<Vec<ThetaVec>> {
    let grid = theta.grid();
    if x.grid != *grid {
        return Err(Error::GridMismatch);
    }
    check_len("assemble_z reconstruction", grid.node_count(), p_hat.len())?;
    (0..grid.node_count())
        .map(|k| {
            let state = &x.values[k.saturating_sub(1)];
            field.vjp_params(state, theta.value(k), &p_hat[k])
        })
        .collect()
}

/// Nodal H¹ Riesz gradient `g⁰..gᴷ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RieszGradient {
    pub values: Vec<ThetaVec>,
}

impl RieszGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|v| v.as_slice().iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.as_slice().iter().all(|x| x.is_finite()))
    }
}

/// Copies component `c` of every nodal vector into `out`.
fn gather(values: &[ThetaVec], c: usize, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(values) {
        *o = v.as_slice()[c];
    }
}

/// Solves the gradient equation component by component as
/// `g = λΘ + B⁻¹ M z`.
pub fn solve_gradient(
    fem: &FemMatrices,
    theta: &ControlPath,
    z: &[ThetaVec],
    lambda: f64,
) -> Result<RieszGradient> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be non-negative".into()));
    }
    let nodes = theta.grid().node_count();
    check_len("solve_gradient matrix size", nodes, fem.combined.size())?;
    check_len("solve_gradient z", nodes, z.len())?;
    let mut values: Vec<ThetaVec> = theta
        .values()
        .iter()
        .map(|v| {
            let mut g = v.clone();
            g.as_mut_slice().iter_mut().for_each(|x| *x *= lambda);
            g
        })
        .collect();
    let mut column = vec![0.0; nodes];
    for c in 0..theta.param_len() {
        gather(z, c, &mut column);
        let rhs = fem.mass.mul_vec(&column);
        let solved = solve_tridiagonal(&fem.combined, &rhs)?;
        for (g, s) in values.iter_mut().zip(&solved) {
            g.as_mut_slice()[c] += s;
        }
    }
    Ok(RieszGradient { values })
}

/// `uᵀ (B⊗I) v` for nodal vectors `u`, `v`.
pub fn h1_inner(fem: &FemMatrices, u: &[ThetaVec], v: &[ThetaVec]) -> f64 {
    let nodes = u.len();
    let n = u[0].len();
    let mut cu = vec![0.0; nodes];
    let mut cv = vec![0.0; nodes];
    (0..n)
        .map(|c| {
            gather(u, c, &mut cu);
            gather(v, c, &mut cv);
            dot(&cu, &fem.combined.mul_vec(&cv))
        })
        .sum()
}

/// `R(θ_τ) = (λ/2) Θᵀ(B⊗I)Θ`
pub fn regularizer(fem: &FemMatrices, theta: &ControlPath, lambda: f64) -> f64 {
    0.5 * lambda * h1_inner(fem, theta.values(), theta.values())
}

/// Full pipeline from a solved state/adjoint pair to the Riesz gradient.
pub fn riesz_gradient(
    field: &NeuralField,
    theta: &ControlPath,
    x: &StateTrajectory,
    p: &AdjointTrajectory,
    lambda: f64,
) -> Result<RieszGradient> {
    let fem = assemble_fem(theta.grid());
    let p_hat = reconstruct_adjoint_at_nodes(p);
    let z = assemble_z(field, x, theta, &p_hat)?;
    solve_gradient(&fem, theta, &z, lambda)
}
