//! Piecewise-linear control paths and the DG(0) time-marching schemes:
//! forward Euler for the state, backward Euler for the adjoint.

use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::field::{BatchState, NeuralField, ThetaVec};
use crate::grid::TimeGrid;
use crate::linalg::axpy;

/// Nodal parameters `θ⁰..θᴷ`, linear in time between nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    values: Vec<ThetaVec>,
}

impl ControlPath {
    pub fn new(grid: TimeGrid, values: Vec<ThetaVec>) -> Result<Self> {
        check_len("ControlPath values", grid.node_count(), values.len())?;
        let width = values[0].width();
        if values.iter().any(|v| v.width() != width) {
            return Err(Error::InvalidArgument("control widths differ".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `theta(t)` at every node.
    pub fn from_fn(grid: TimeGrid, width: usize, theta: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let values = grid
            .nodes()
            .iter()
            .map(|&t| ThetaVec::from_vec(width, theta(t)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[ThetaVec] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ThetaVec] {
        &mut self.values
    }

    pub fn value(&self, k: usize) -> &ThetaVec {
        &self.values[k]
    }

    pub fn width(&self) -> usize {
        self.values[0].width()
    }

    pub fn param_len(&self) -> usize {
        self.values[0].len()
    }

    /// `θ^{k−1/2} = (θ^{k−1} + θᵏ)/2`
    pub fn midpoint_value(&self, k: usize) -> ThetaVec {
        ThetaVec::midpoint(&self.values[k - 1], &self.values[k])
    }

    /// Value at `t` on interval `k`.
    pub fn eval_on(&self, k: usize, t: f64) -> ThetaVec {
        let w = (t - self.grid.node(k - 1)) / self.grid.tau(k);
        if w == 0.0 {
            return self.values[k - 1].clone();
        }
        if w == 1.0 {
            return self.values[k].clone();
        }
        ThetaVec::lerp(&self.values[k - 1], &self.values[k], w)
    }

    pub fn eval(&self, t: f64) -> ThetaVec {
        self.eval_on(self.grid.locate(t), t)
    }

    /// Flattened `Θ = (θ⁰, …, θᴷ)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|v| v.as_slice().iter().copied())
            .collect()
    }

    pub fn from_flat(grid: TimeGrid, width: usize, flat: &[f64]) -> Result<Self> {
        let n = crate::field::param_len(width);
        check_len("ControlPath::from_flat", grid.node_count() * n, flat.len())?;
        let values = flat
            .chunks_exact(n)
            .map(|c| ThetaVec::from_vec(width, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    /// Bisects interval `k_star`; the new node takes the mean of its
    /// neighbours.
    pub fn insert_midpoint(&self, k_star: usize) -> Result<Self> {
        let grid = self.grid.insert_midpoint(k_star)?;
        let mut values = Vec::with_capacity(self.values.len() + 1);
        values.extend_from_slice(&self.values[..k_star]);
        values.push(self.midpoint_value(k_star));
        values.extend_from_slice(&self.values[k_star..]);
        Self::new(grid, values)
    }
}

/// States `x⁰..xᴷ`; `x_τ(t) = x^{k−1}` on `[t_{k−1}, t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub values: Vec<BatchState>,
}

/// Adjoints `p⁰..pᴷ`; `p_τ(t) = pᵏ` on `(t_{k−1}, t_k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory {
    pub grid: TimeGrid,
    pub values: Vec<BatchState>,
}

impl StateTrajectory {
    pub fn terminal(&self) -> &BatchState {
        &self.values[self.values.len() - 1]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trajectory_csv(&self.grid, &self.values, out)
    }
}

impl AdjointTrajectory {
    pub fn initial(&self) -> &BatchState {
        &self.values[0]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trajectory_csv(&self.grid, &self.values, out)
    }
}

fn write_trajectory_csv<W: Write>(grid: &TimeGrid, values: &[BatchState], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for (t, v) in grid.nodes().iter().zip(values) {
        let mut row = Vec::with_capacity(v.as_slice().len() + 1);
        row.push(t.to_string());
        row.extend(v.as_slice().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `xᵏ = x^{k−1} + τ_k F(x^{k−1}, θ^{k−1/2})`, `x⁰ = x_in`.
pub fn solve_state(
    field: &NeuralField,
    theta: &ControlPath,
    x_in: &BatchState,
) -> Result<StateTrajectory> {
    let grid = theta.grid();
    let mut values = Vec::with_capacity(grid.node_count());
    values.push(x_in.clone());
    for k in 1..=grid.intervals() {
        let prev = &values[k - 1];
        let rate = field.eval(prev, &theta.midpoint_value(k))?;
        let mut next = prev.clone();
        next.add_scaled(grid.tau(k), &rate);
        if !next.is_finite() {
            return Err(Error::NonFiniteState(k));
        }
        values.push(next);
    }
    Ok(StateTrajectory {
        grid: grid.clone(),
        values,
    })
}

/// `pᴷ = l′(xᴷ)`, `p^{k−1} = pᵏ + τ_k D₁F(x^{k−1}, θ^{k−1/2})* pᵏ` for
/// `k = K..1`.
pub fn solve_adjoint(
    field: &NeuralField,
    theta: &ControlPath,
    x: &StateTrajectory,
    terminal_grad: &BatchState,
) -> Result<AdjointTrajectory> {
    let grid = theta.grid();
    if x.grid != *grid {
        return Err(Error::GridMismatch);
    }
    check_len(
        "solve_adjoint terminal gradient",
        x.terminal().as_slice().len(),
        terminal_grad.as_slice().len(),
    )?;
    let k_max = grid.intervals();
    let mut values = vec![terminal_grad.clone(); k_max + 1];
    if !terminal_grad.is_finite() {
        return Err(Error::NonFiniteAdjoint(k_max));
    }
    for k in (1..=k_max).rev() {
        let pull = field.vjp_state(&x.values[k - 1], &theta.midpoint_value(k), &values[k])?;
        let mut prev = values[k].clone();
        prev.add_scaled(grid.tau(k), &pull);
        if !prev.is_finite() {
            return Err(Error::NonFiniteAdjoint(k - 1));
        }
        values[k - 1] = prev;
    }
    Ok(AdjointTrajectory {
        grid: grid.clone(),
        values,
    })
}

/// Exact derivative of `J(xᴷ)` with respect to each nodal `θʲ` under the
/// forward Euler map: `Σ_k τ_k · ½(δ_{j,k−1} + δ_{j,k}) · D₂F(x^{k−1}, θ^{k−1/2})* pᵏ`.
pub fn nodal_chain_rule_gradient(
    field: &NeuralField,
    theta: &ControlPath,
    x: &StateTrajectory,
    p: &AdjointTrajectory,
) -> Result<Vec<ThetaVec>> {
    let grid = theta.grid();
    if x.grid != *grid || p.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let mut out = vec![ThetaVec::zeros(theta.width()); grid.node_count()];
    for k in 1..=grid.intervals() {
        let v = field.vjp_params(&x.values[k - 1], &theta.midpoint_value(k), &p.values[k])?;
        let half_tau = 0.5 * grid.tau(k);
        axpy(half_tau, v.as_slice(), out[k - 1].as_mut_slice());
        axpy(half_tau, v.as_slice(), out[k].as_mut_slice());
    }
    Ok(out)
}
