//! Dual-weighted residual indicators per time interval.
//!
//! For every interval `I_k` the indicator is
//! `η_k = R_p^k ω_x^k + |ρ^k| + R_x^k ω_p^k`, built from the discrete triple
//! `(x_τ, θ_τ, p_τ)`: equation residuals `R`, sensitivity weights `ω` from
//! piecewise-linear reconstructions of state and adjoint, and the control
//! residual `ρ` that compares `θ_τ` with its continuous piecewise-quadratic
//! reconstruction `ϑ_τ`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NeuralField, ThetaVec};
use crate::grid::TimeGrid;
use crate::linalg::dot;
use crate::trajectory::{AdjointTrajectory, ControlPath, StateTrajectory};

/// Sample count used to approximate the supremum over an interval.
pub const DEFAULT_SUP_SAMPLES: usize = 5;

/// `ϑ|_{I_k}(s) = A_k s² + B_k s + C_k`, `s = (t − t_{k−1})/τ_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticReconstruction {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl QuadraticReconstruction {
    /// Interpolates both nodal values and matches the left slope `S_{k−1}` of
    /// the previous interval (`S₀ = 0`).
    pub fn new(theta: &ControlPath) -> Self {
        let grid = theta.grid();
        let k_max = grid.intervals();
        let (mut a, mut b, mut c) = (
            Vec::with_capacity(k_max),
            Vec::with_capacity(k_max),
            Vec::with_capacity(k_max),
        );
        for k in 1..=k_max {
            let tau = grid.tau(k);
            let left = theta.value(k - 1).as_slice();
            let right = theta.value(k).as_slice();
            let bk: Vec<f64> = if k == 1 {
                vec![0.0; left.len()]
            } else {
                let prev = theta.value(k - 2).as_slice();
                let tau_prev = grid.tau(k - 1);
                left.iter()
                    .zip(prev)
                    .map(|(l, p)| (l - p) / tau_prev * tau)
                    .collect()
            };
            let ak = right
                .iter()
                .zip(left)
                .zip(&bk)
                .map(|((r, l), bb)| r - l - bb)
                .collect();
            a.push(ak);
            b.push(bk);
            c.push(left.to_vec());
        }
        Self { a, b, c }
    }

    /// Value on interval `k` at local coordinate `s`.
    pub fn eval(&self, k: usize, s: f64) -> Vec<f64> {
        let i = k - 1;
        self.a[i]
            .iter()
            .zip(&self.b[i])
            .zip(&self.c[i])
            .map(|((a, b), c)| a * s * s + b * s + c)
            .collect()
    }

    /// `dϑ/dt` on interval `k` at local coordinate `s`.
    pub fn derivative(&self, k: usize, s: f64, tau: f64) -> Vec<f64> {
        let i = k - 1;
        self.a[i]
            .iter()
            .zip(&self.b[i])
            .map(|(a, b)| (2.0 * a * s + b) / tau)
            .collect()
    }
}

/// The individual closed-form integrals that make up `ρ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlResidualTerms {
    /// `∫_{I_k} (θ_τ, ϑ_τ) dt`
    pub theta_vartheta: f64,
    /// `∫_{I_k} (θ_τ, θ_τ) dt`
    pub theta_theta: f64,
    /// `∫_{I_k} (θ̇_τ, ϑ̇_τ) dt − ∫_{I_k} (θ̇_τ, θ̇_τ) dt`
    pub derivative_mismatch: f64,
    /// `∫_{I_k} (ϑ_τ − θ_τ) dt`
    pub mismatch_integral: Vec<f64>,
    /// `D₂F(x^{k−1}, θ^{k−1/2})* pᵏ`, treated as constant on the interval.
    pub data_sensitivity: ThetaVec,
    /// Signed residual `ρ^k`.
    pub rho: f64,
}

/// One row of the indicator table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalIndicator {
    pub k: usize,
    pub t_left: f64,
    pub t_right: f64,
    #[serde(rename = "R_x")]
    pub r_x: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    pub omega_x: f64,
    pub omega_p: f64,
    pub rho: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub intervals: Vec<IntervalIndicator>,
    /// `½ Σ η_k`
    pub delta: f64,
    /// Interval with the largest `η` (lowest index on ties).
    pub k_star: usize,
}

impl IndicatorReport {
    pub fn from_parts(
        grid: &TimeGrid,
        r_x: &[f64],
        r_p: &[f64],
        omega: &[(f64, f64)],
        rho: &[f64],
    ) -> Self {
        let intervals: Vec<IntervalIndicator> = (1..=grid.intervals())
            .map(|k| {
                let i = k - 1;
                let (omega_x, omega_p) = omega[i];
                IntervalIndicator {
                    k,
                    t_left: grid.node(k - 1),
                    t_right: grid.node(k),
                    r_x: r_x[i],
                    r_p: r_p[i],
                    omega_x,
                    omega_p,
                    rho: rho[i],
                    eta: r_p[i] * omega_x + rho[i].abs() + r_x[i] * omega_p,
                }
            })
            .collect();
        let mut k_star = 1;
        for row in &intervals {
            if row.eta > intervals[k_star - 1].eta {
                k_star = row.k;
            }
        }
        let delta = 0.5 * intervals.iter().map(|r| r.eta).sum::<f64>();
        Self {
            intervals,
            delta,
            k_star,
        }
    }

    pub fn etas(&self) -> Vec<f64> {
        self.intervals.iter().map(|r| r.eta).collect()
    }

    /// CSV with header `k,t_left,t_right,R_x,R_p,omega_x,omega_p,rho,eta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.intervals {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_triple(theta: &ControlPath, x: &StateTrajectory, p: Option<&AdjointTrajectory>) -> Result<()> {
    if x.grid != *theta.grid() || p.is_some_and(|p| p.grid != *theta.grid()) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Local sample points `s ∈ [0, 1]`, endpoints included.
fn sample_points(n_s: usize) -> Vec<f64> {
    match n_s {
        0 | 1 => vec![0.5],
        n => (0..n).map(|j| j as f64 / (n - 1) as f64).collect(),
    }
}

fn theta_at(theta: &ControlPath, k: usize, s: f64) -> ThetaVec {
    if s == 0.0 {
        theta.value(k - 1).clone()
    } else if s == 1.0 {
        theta.value(k).clone()
    } else if s == 0.5 {
        theta.midpoint_value(k)
    } else {
        ThetaVec::lerp(theta.value(k - 1), theta.value(k), s)
    }
}

/// `R_x^k = τ_k sup‖F(x^{k−1}, θ_τ)‖ + τ_k/(τ_k+τ_{k+1})‖xᵏ − x^{k−1}‖
///          + 𝕀_{2≤k≤K−1} τ_k/(τ_k+τ_{k−1})‖x^{k−1} − x^{k−2}‖`
pub fn state_residuals(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    n_s: usize,
) -> Result<Vec<f64>> {
    check_triple(theta, x, None)?;
    let grid = theta.grid();
    let k_max = grid.intervals();
    let samples = sample_points(n_s);
    (1..=k_max)
        .map(|k| {
            let tau = grid.tau(k);
            let mut sup = 0.0_f64;
            for &s in &samples {
                sup = sup.max(field.eval(&x.values[k - 1], &theta_at(theta, k, s))?.norm());
            }
            let mut r = tau * sup;
            r += tau / (tau + grid.tau(k + 1)) * x.values[k].distance(&x.values[k - 1]);
            if (2..k_max).contains(&k) {
                r += tau / (tau + grid.tau(k - 1)) * x.values[k - 1].distance(&x.values[k - 2]);
            }
            Ok(r)
        })
        .collect()
}

/// `R_p^k = τ_k sup‖D₁F(x^{k−1}, θ_τ)* pᵏ‖ + τ_k/(τ_{k−1}+τ_k)‖pᵏ − p^{k−1}‖
///          + 𝕀_{1≤k≤K−1} τ_k/(τ_k+τ_{k+1})‖p^{k+1} − pᵏ‖`
pub fn adjoint_residuals(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    p: &AdjointTrajectory,
    n_s: usize,
) -> Result<Vec<f64>> {
    check_triple(theta, x, Some(p))?;
    let grid = theta.grid();
    let k_max = grid.intervals();
    let samples = sample_points(n_s);
    (1..=k_max)
        .map(|k| {
            let tau = grid.tau(k);
            let mut sup = 0.0_f64;
            for &s in &samples {
                let v = field.vjp_state(&x.values[k - 1], &theta_at(theta, k, s), &p.values[k])?;
                sup = sup.max(v.norm());
            }
            let mut r = tau * sup;
            r += tau / (grid.tau(k - 1) + tau) * p.values[k].distance(&p.values[k - 1]);
            if k < k_max {
                r += tau / (tau + grid.tau(k + 1)) * p.values[k + 1].distance(&p.values[k]);
            }
            Ok(r)
        })
        .collect()
}

/// `(ω_x^k, ω_p^k) = (‖xᵏ − x^{k−1}‖, ‖pᵏ − p^{k−1}‖)`
pub fn weights(x: &StateTrajectory, p: &AdjointTrajectory) -> Result<Vec<(f64, f64)>> {
    if x.grid != p.grid {
        return Err(Error::GridMismatch);
    }
    Ok((1..=x.grid.intervals())
        .map(|k| {
            (
                x.values[k].distance(&x.values[k - 1]),
                p.values[k].distance(&p.values[k - 1]),
            )
        })
        .collect())
}

/// Closed-form evaluation of every integral in `ρ^k`, one entry per interval.
pub fn control_residual_terms(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    p: &AdjointTrajectory,
    lambda: f64,
) -> Result<Vec<ControlResidualTerms>> {
    check_triple(theta, x, Some(p))?;
    let grid = theta.grid();
    let rec = QuadraticReconstruction::new(theta);
    (1..=grid.intervals())
        .map(|k| {
            let i = k - 1;
            let tau = grid.tau(k);
            let (left, right) = (theta.value(k - 1).as_slice(), theta.value(k).as_slice());
            let (a, b, c) = (&rec.a[i], &rec.b[i], &rec.c[i]);

            // ∫₀¹ (1−s)(As²+Bs+C) ds and ∫₀¹ s(As²+Bs+C) ds
            let alpha: Vec<f64> = (0..a.len())
                .map(|j| a[j] / 12.0 + b[j] / 6.0 + c[j] / 2.0)
                .collect();
            let beta: Vec<f64> = (0..a.len())
                .map(|j| a[j] / 4.0 + b[j] / 3.0 + c[j] / 2.0)
                .collect();
            let theta_vartheta = tau * (dot(left, &alpha) + dot(right, &beta));
            let theta_theta =
                tau / 3.0 * (dot(left, left) + dot(right, right)) + tau / 3.0 * dot(left, right);

            let delta: Vec<f64> = right.iter().zip(left).map(|(r, l)| r - l).collect();
            let a_plus_b: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + v).collect();
            let derivative_mismatch = (dot(&delta, &a_plus_b) - dot(&delta, &delta)) / tau;

            let mismatch_integral: Vec<f64> = (0..a.len())
                .map(|j| {
                    tau * (a[j] / 3.0 + b[j] / 2.0 + c[j] - 0.5 * (left[j] + right[j]))
                })
                .collect();
            let data_sensitivity =
                field.vjp_params(&x.values[k - 1], &theta.midpoint_value(k), &p.values[k])?;

            let rho = lambda * (theta_vartheta - theta_theta + derivative_mismatch)
                + dot(data_sensitivity.as_slice(), &mismatch_integral);
            Ok(ControlResidualTerms {
                theta_vartheta,
                theta_theta,
                derivative_mismatch,
                mismatch_integral,
                data_sensitivity,
                rho,
            })
        })
        .collect()
}

/// Signed control residuals `ρ^k`.
pub fn control_residual(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    p: &AdjointTrajectory,
    lambda: f64,
) -> Result<Vec<f64>> {
    Ok(control_residual_terms(field, x, theta, p, lambda)?
        .into_iter()
        .map(|t| t.rho)
        .collect())
}

pub fn indicate(
    field: &NeuralField,
    x: &StateTrajectory,
    theta: &ControlPath,
    p: &AdjointTrajectory,
    lambda: f64,
    n_s: usize,
) -> Result<IndicatorReport> {
    let r_x = state_residuals(field, x, theta, n_s)?;
    let r_p = adjoint_residuals(field, x, theta, p, n_s)?;
    let omega = weights(x, p)?;
    let rho = control_residual(field, x, theta, p, lambda)?;
    Ok(IndicatorReport::from_parts(theta.grid(), &r_x, &r_p, &omega, &rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{param_len, BatchState};
    use crate::linalg::SeededRng;
    use crate::oracles::composite_simpson;
    use crate::trajectory::{solve_adjoint, solve_state};

    struct Instance {
        field: NeuralField,
        theta: ControlPath,
        x: StateTrajectory,
        p: AdjointTrajectory,
    }

    fn random_instance(seed: u64, intervals: usize) -> Instance {
        let mut rng = SeededRng::new(seed);
        let (d, m) = (2, 3);
        let field = NeuralField::new(d);
        let mut nodes = vec![0.0];
        for _ in 0..intervals {
            let last = *nodes.last().unwrap();
            nodes.push(last + 0.2 + rng.uniform());
        }
        let grid = TimeGrid::from_nodes(nodes).unwrap();
        let values = (0..=intervals)
            .map(|_| {
                ThetaVec::from_vec(d, (0..param_len(d)).map(|_| 0.7 * rng.standard_normal()).collect())
                    .unwrap()
            })
            .collect();
        let theta = ControlPath::new(grid, values).unwrap();
        let x_in = BatchState::from_vec(d, (0..m * d).map(|_| rng.standard_normal()).collect()).unwrap();
        let x = solve_state(&field, &theta, &x_in).unwrap();
        let pk = BatchState::from_vec(d, (0..m * d).map(|_| rng.standard_normal()).collect()).unwrap();
        let p = solve_adjoint(&field, &theta, &x, &pk).unwrap();
        Instance { field, theta, x, p }
    }

    #[test]
    fn reconstruction_interpolates_and_matches_left_slope() {
        let inst = random_instance(1, 5);
        let rec = QuadraticReconstruction::new(&inst.theta);
        let grid = inst.theta.grid();
        for k in 1..=grid.intervals() {
            let at0 = rec.eval(k, 0.0);
            let at1 = rec.eval(k, 1.0);
            assert_eq!(at0, inst.theta.value(k - 1).as_slice());
            for (u, v) in at1.iter().zip(inst.theta.value(k).as_slice()) {
                assert!((u - v).abs() < 1e-14);
            }
            let slope = rec.derivative(k, 0.0, grid.tau(k));
            if k == 1 {
                assert!(slope.iter().all(|&s| s == 0.0));
            } else {
                let prev = (inst.theta.value(k - 1).as_slice(), inst.theta.value(k - 2).as_slice());
                for (j, s) in slope.iter().enumerate() {
                    let expected = (prev.0[j] - prev.1[j]) / grid.tau(k - 1);
                    assert!((s - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_controls_give_zero_rho() {
        let field = NeuralField::new(1);
        let grid = TimeGrid::uniform(4, 2.0).unwrap();
        let theta = ControlPath::from_fn(grid.clone(), 1, |_| vec![0.4, -0.3]).unwrap();
        let x = solve_state(&field, &theta, &BatchState::from_vec(1, vec![0.5, 1.0]).unwrap()).unwrap();
        let p = AdjointTrajectory { grid, values: vec![BatchState::zeros(2, 1); 5] };
        let rho = control_residual(&field, &x, &theta, &p, 0.1).unwrap();
        assert!(rho.iter().all(|r| r.abs() < 1e-15), "{rho:?}");
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for seed in 0..10 {
            let inst = random_instance(100 + seed, 6);
            let terms = control_residual_terms(&inst.field, &inst.x, &inst.theta, &inst.p, 0.2).unwrap();
            let rec = QuadraticReconstruction::new(&inst.theta);
            let grid = inst.theta.grid();
            for k in 1..=grid.intervals() {
                let tau = grid.tau(k);
                let lin = |s: f64| inst.theta.eval_on(k, grid.node(k - 1) + s * tau).into_vec();
                let dlin: Vec<f64> = inst.theta.value(k).as_slice().iter()
                    .zip(inst.theta.value(k - 1).as_slice())
                    .map(|(r, l)| (r - l) / tau)
                    .collect();
                let q = |g: &dyn Fn(f64) -> f64| tau * composite_simpson(g, 0.0, 1.0, 1000);
                let t = &terms[k - 1];
                let tv = q(&|s| dot(&lin(s), &rec.eval(k, s)));
                let tt = q(&|s| dot(&lin(s), &lin(s)));
                let dd = q(&|s| dot(&dlin, &rec.derivative(k, s, tau)) - dot(&dlin, &dlin));
                assert!((t.theta_vartheta - tv).abs() <= 1e-8 * tv.abs().max(1e-12));
                assert!((t.theta_theta - tt).abs() <= 1e-8 * tt.abs().max(1e-12));
                assert!(dd.abs() < 1e-10 && t.derivative_mismatch.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_cases() {
        let grid = TimeGrid::uniform(2, 1.0).unwrap();
        let traj = |v: [f64; 3]| StateTrajectory {
            grid: grid.clone(),
            values: v.iter().map(|&a| BatchState::from_vec(1, vec![a]).unwrap()).collect(),
        };
        let x = traj([0.0, 3.0, 3.0]);
        let p = AdjointTrajectory { grid: grid.clone(), values: traj([1.0, 1.0, 1.0]).values };
        assert_eq!(weights(&x, &p).unwrap(), vec![(3.0, 0.0), (0.0, 0.0)]);
        let shifted = traj([5.0, 8.0, 8.0]);
        assert_eq!(weights(&shifted, &p).unwrap(), weights(&x, &p).unwrap());
    }

    #[test]
    fn zero_field_and_constant_trajectories_give_zero_residuals() {
        let field = NeuralField::new(1);
        let grid = TimeGrid::uniform(3, 3.0).unwrap();
        let theta = ControlPath::from_fn(grid.clone(), 1, |_| vec![0.0, 0.0]).unwrap();
        let x = solve_state(&field, &theta, &BatchState::from_vec(1, vec![2.0]).unwrap()).unwrap();
        let p = solve_adjoint(&field, &theta, &x, &BatchState::from_vec(1, vec![-1.0]).unwrap()).unwrap();
        assert!(state_residuals(&field, &x, &theta, 5).unwrap().iter().all(|&r| r == 0.0));
        assert!(adjoint_residuals(&field, &x, &theta, &p, 5).unwrap().iter().all(|&r| r == 0.0));
        let report = indicate(&field, &x, &theta, &p, 0.0, 5).unwrap();
        assert!(report.etas().iter().all(|&e| e == 0.0));
        assert_eq!(report.delta, 0.0);
        assert_eq!(report.k_star, 1);
    }

    #[test]
    fn single_interval_state_residual() {
        // K = 1: the neighbouring-jump term vanishes; the own-jump weight is 1.
        let field = NeuralField::new(1);
        let grid = TimeGrid::uniform(1, 2.0).unwrap();
        let theta = ControlPath::from_fn(grid, 1, |_| vec![0.0, 0.5]).unwrap();
        let x = solve_state(&field, &theta, &BatchState::zeros(1, 1)).unwrap();
        let r = state_residuals(&field, &x, &theta, 5).unwrap();
        let sup = 0.5f64.tanh();
        let jump = 2.0 * sup;
        assert!((r[0] - (2.0 * sup + jump)).abs() < 1e-14);
    }

    #[test]
    fn adjoint_jump_weights_on_uniform_two_interval_grid() {
        let field = NeuralField::new(1);
        let grid = TimeGrid::uniform(2, 2.0).unwrap();
        let theta = ControlPath::from_fn(grid.clone(), 1, |_| vec![0.0, 0.0]).unwrap();
        let x = solve_state(&field, &theta, &BatchState::zeros(1, 1)).unwrap();
        let p = AdjointTrajectory {
            grid,
            values: [0.0, 1.0, 3.0].iter().map(|&v| BatchState::from_vec(1, vec![v]).unwrap()).collect(),
        };
        let r = adjoint_residuals(&field, &x, &theta, &p, 5).unwrap();
        // k = 1: own jump weight τ₁/(τ₀+τ₁) = 1, forward jump weight ½
        assert!((r[0] - (1.0 + 0.5 * 2.0)).abs() < 1e-15);
        // k = 2: own jump weight ½, no forward jump
        assert!((r[1] - 0.5 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn sup_sampling_is_stable() {
        let inst = random_instance(7, 5);
        let coarse = state_residuals(&inst.field, &inst.x, &inst.theta, 5).unwrap();
        let fine = state_residuals(&inst.field, &inst.x, &inst.theta, 101).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c <= f && (f - c) / f < 0.05);
        }
        let coarse = adjoint_residuals(&inst.field, &inst.x, &inst.theta, &inst.p, 5).unwrap();
        let fine = adjoint_residuals(&inst.field, &inst.x, &inst.theta, &inst.p, 101).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c <= f && (f - c) / f < 0.05);
        }
    }

    #[test]
    fn argmax_and_ties() {
        let grid = TimeGrid::uniform(4, 4.0).unwrap();
        let zeros = vec![0.0; 4];
        let omega = vec![(1.0, 0.0); 4];
        let single = IndicatorReport::from_parts(&grid, &zeros, &[0.0, 0.0, 2.0, 0.0], &omega, &zeros);
        assert_eq!(single.k_star, 3);
        let tied = IndicatorReport::from_parts(&grid, &zeros, &[0.0, 2.0, 2.0, 1.0], &omega, &zeros);
        assert_eq!(tied.k_star, 2);
        let signed = IndicatorReport::from_parts(&grid, &zeros, &zeros, &omega, &[0.0, -3.0, 1.0, 0.0]);
        assert_eq!(signed.intervals[1].eta, 3.0);
        assert_eq!(signed.k_star, 2);
        assert_eq!(signed.delta, 2.0);
    }

    #[test]
    fn adjoint_homogeneity() {
        let inst = random_instance(9, 4);
        let c = 2.5;
        let scaled = AdjointTrajectory {
            grid: inst.p.grid.clone(),
            values: inst.p.values.iter().map(|v| {
                BatchState::from_vec(v.width(), v.as_slice().iter().map(|a| c * a).collect()).unwrap()
            }).collect(),
        };
        let r1 = adjoint_residuals(&inst.field, &inst.x, &inst.theta, &inst.p, 5).unwrap();
        let r2 = adjoint_residuals(&inst.field, &inst.x, &inst.theta, &scaled, 5).unwrap();
        let w1 = weights(&inst.x, &inst.p).unwrap();
        let w2 = weights(&inst.x, &scaled).unwrap();
        let t1 = control_residual_terms(&inst.field, &inst.x, &inst.theta, &inst.p, 0.3).unwrap();
        let t2 = control_residual_terms(&inst.field, &inst.x, &inst.theta, &scaled, 0.3).unwrap();
        for k in 0..4 {
            assert!((r2[k] - c * r1[k]).abs() < 1e-12 * r2[k].abs().max(1.0));
            assert!((w2[k].1 - c * w1[k].1).abs() < 1e-12 * w2[k].1.abs().max(1.0));
            assert_eq!(w2[k].0, w1[k].0);
            let data = |t: &ControlResidualTerms| dot(t.data_sensitivity.as_slice(), &t.mismatch_integral);
            assert!((data(&t2[k]) - c * data(&t1[k])).abs() < 1e-12 * data(&t2[k]).abs().max(1.0));
        }
    }

    #[test]
    fn linear_controls_are_reproduced_on_first_interval() {
        let grid = TimeGrid::from_nodes(vec![0.0, 1.0, 2.5, 3.0]).unwrap();
        // θ⁰ = θ¹, linear afterwards
        let theta = ControlPath::new(
            grid,
            vec![
                ThetaVec::from_vec(1, vec![0.2, 0.1]).unwrap(),
                ThetaVec::from_vec(1, vec![0.2, 0.1]).unwrap(),
                ThetaVec::from_vec(1, vec![0.5, -0.2]).unwrap(),
                ThetaVec::from_vec(1, vec![0.6, -0.3]).unwrap(),
            ],
        )
        .unwrap();
        let rec = QuadraticReconstruction::new(&theta);
        for s in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(rec.eval(1, s), vec![0.2, 0.1]);
        }
    }

    #[test]
    fn csv_schema() {
        let inst = random_instance(11, 3);
        let report = indicate(&inst.field, &inst.x, &inst.theta, &inst.p, 1e-3, 5).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,t_left,t_right,R_x,R_p,omega_x,omega_p,rho,eta");
        assert_eq!(lines.count(), 3);
    }
}
