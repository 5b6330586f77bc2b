//! Finite-difference checks of every hand-written derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{param_len, BatchState, NeuralField, ThetaVec};
use crate::grid::TimeGrid;
use crate::h1::{assemble_fem, h1_inner, regularizer, riesz_gradient};
use crate::linalg::{gaussian_matrix, SeededRng};
use crate::loss::{HeadKind, Labels, TaskHead};
use crate::oracles::{fd_directional, FD_STEP};
use crate::trajectory::{nodal_chain_rule_gradient, solve_adjoint, solve_state, ControlPath};

/// Deliberate corruption used as a negative control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    VjpState,
    NodalGradient,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vjp-state" => Ok(Fault::VjpState),
            "nodal-gradient" => Ok(Fault::NodalGradient),
            other => Err(Error::InvalidArgument(format!("unknown fault {other:?}"))),
        }
    }
}

fn default_width() -> usize {
    3
}
fn default_samples() -> usize {
    4
}
fn default_intervals() -> usize {
    6
}
fn default_t_final() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_classes() -> usize {
    3
}
fn default_tolerance() -> f64 {
    1e-5
}
fn default_directions() -> usize {
    20
}
fn default_min_ratio() -> f64 {
    1.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bound on the relative error of the exact derivatives.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Directions used by the H¹ consistency check.
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Smallest accepted error reduction per grid bisection.
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
    /// Normwise relative H¹ error per refinement level.
    pub h1_errors: Vec<H1Level>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Level {
    pub intervals: usize,
    pub relative_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `|a − b| / max(|a|, |b|, 1e−8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| relative_error(*a, *b))
        .fold(0.0, f64::max)
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

fn random_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.standard_normal()).collect()
}

/// A small classification problem on a nonuniform grid.
pub struct Instance {
    pub field: NeuralField,
    pub theta: ControlPath,
    pub x_in: BatchState,
    pub head: TaskHead,
    pub labels: Labels,
}

impl Instance {
    pub fn random(config: &GradcheckConfig, rng: &mut SeededRng) -> Result<Self> {
        let d = config.width;
        let mut taus: Vec<f64> = (0..config.intervals).map(|_| 0.5 + rng.uniform()).collect();
        let total: f64 = taus.iter().sum();
        taus.iter_mut().for_each(|t| *t *= config.t_final / total);
        let mut nodes = vec![0.0];
        for t in &taus {
            nodes.push(nodes.last().unwrap() + t);
        }
        *nodes.last_mut().unwrap() = config.t_final;
        let grid = TimeGrid::from_nodes(nodes)?;
        let scale = 1.0 / (d as f64).sqrt();
        let values = (0..grid.node_count())
            .map(|_| ThetaVec::from_vec(d, random_vec(rng, param_len(d), scale)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_theta(config, ControlPath::new(grid, values)?, rng)
    }

    /// Random data, output map and labels around a given control path.
    pub fn with_theta(config: &GradcheckConfig, theta: ControlPath, rng: &mut SeededRng) -> Result<Self> {
        let d = config.width;
        let x_in = BatchState::from_vec(d, random_vec(rng, config.samples * d, 1.0))?;
        let w_out = gaussian_matrix(rng, config.classes, d, 1.0 / (d as f64).sqrt());
        let classes: Vec<usize> = (0..config.samples).map(|_| rng.index(config.classes)).collect();
        Ok(Self {
            field: NeuralField::new(d),
            theta,
            x_in,
            head: TaskHead::new(HeadKind::MulticlassSoftmax, w_out)?,
            labels: Labels::one_hot(&classes, config.classes)?,
        })
    }

    /// `J(Θ) = l(x(T))` for flattened nodal controls.
    pub fn objective(&self, flat: &[f64]) -> f64 {
        let theta = ControlPath::from_flat(self.theta.grid().clone(), self.theta.width(), flat)
            .expect("flat controls");
        let x = solve_state(&self.field, &theta, &self.x_in).expect("finite state");
        self.head.loss(x.terminal(), &self.labels).expect("loss")
    }

    /// Exact derivative of `J` with respect to the nodal controls.
    pub fn nodal_gradient(&self) -> Result<Vec<f64>> {
        let x = solve_state(&self.field, &self.theta, &self.x_in)?;
        let pk = self.head.terminal_gradient(x.terminal(), &self.labels)?;
        let p = solve_adjoint(&self.field, &self.theta, &x, &pk)?;
        Ok(nodal_chain_rule_gradient(&self.field, &self.theta, &x, &p)?
            .into_iter()
            .flat_map(ThetaVec::into_vec)
            .collect())
    }
}

/// `(δΘᵀ(B⊗I)g, FD of J + R along δΘ)` for each direction.
pub fn h1_directional_pairs(inst: &Instance, directions: &[ControlPath], lambda: f64) -> Result<Vec<(f64, f64)>> {
    let fem = assemble_fem(inst.theta.grid());
    let x = solve_state(&inst.field, &inst.theta, &inst.x_in)?;
    let pk = inst.head.terminal_gradient(x.terminal(), &inst.labels)?;
    let p = solve_adjoint(&inst.field, &inst.theta, &x, &pk)?;
    let g = riesz_gradient(&inst.field, &inst.theta, &x, &p, lambda)?;
    let objective = |flat: &[f64]| {
        let theta = ControlPath::from_flat(inst.theta.grid().clone(), inst.theta.width(), flat)
            .expect("flat controls");
        inst.objective(flat) + regularizer(&fem, &theta, lambda)
    };
    let flat = inst.theta.flatten();
    Ok(directions
        .iter()
        .map(|dir| {
            let predicted = h1_inner(&fem, dir.values(), &g.values);
            (predicted, fd_directional(&objective, &flat, &dir.flatten(), FD_STEP))
        })
        .collect())
}

/// `‖predicted − fd‖ / ‖fd‖` over a set of directions.
pub fn normwise_relative_error(pairs: &[(f64, f64)]) -> f64 {
    let num: f64 = pairs.iter().map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = pairs.iter().map(|(_, b)| b * b).sum();
    (num / den).sqrt()
}

/// Smooth random path `t ↦ a + b sin(ωt + φ)` per component.
pub fn smooth_random_path(grid: &TimeGrid, width: usize, scale: f64, rng: &mut SeededRng) -> Result<ControlPath> {
    let n = param_len(width);
    let t_final = grid.t_final();
    let coeffs: Vec<[f64; 4]> = (0..n)
        .map(|_| {
            [
                scale * rng.standard_normal(),
                scale * rng.standard_normal(),
                2.0 * std::f64::consts::PI * (0.5 + rng.uniform()) / t_final,
                2.0 * std::f64::consts::PI * rng.uniform(),
            ]
        })
        .collect();
    ControlPath::from_fn(grid.clone(), width, |t| {
        coeffs.iter().map(|[a, b, w, phi]| a + b * (w * t + phi).sin()).collect()
    })
}

/// Normwise relative H¹ error over `config.directions` smooth directions on
/// uniform grids with `base`, `2·base`, `4·base`, … intervals. Controls, data
/// and directions are the same functions on every grid.
pub fn h1_refinement_study(config: &GradcheckConfig, levels: usize) -> Result<Vec<H1Level>> {
    let mut rng = SeededRng::new(config.seed ^ 0x5eed);
    let d = config.width;
    let scale = 1.0 / (d as f64).sqrt();
    let base = TimeGrid::uniform(config.intervals, config.t_final)?;
    let theta_seed = rng.next_u64();
    let data_seed = rng.next_u64();
    let dir_seeds: Vec<u64> = (0..config.directions).map(|_| rng.next_u64()).collect();
    (0..levels)
        .map(|level| {
            let grid = base.refine_uniformly(1 << level)?;
            let theta = smooth_random_path(&grid, d, scale, &mut SeededRng::new(theta_seed))?;
            let inst = Instance::with_theta(config, theta, &mut SeededRng::new(data_seed))?;
            let dirs = dir_seeds
                .iter()
                .map(|&s| smooth_random_path(&grid, d, 1.0, &mut SeededRng::new(s)))
                .collect::<Result<Vec<_>>>()?;
            let pairs = h1_directional_pairs(&inst, &dirs, config.lambda)?;
            Ok(H1Level {
                intervals: grid.intervals(),
                relative_error: normwise_relative_error(&pairs),
            })
        })
        .collect()
}

pub fn run(config: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = SeededRng::new(config.seed);
    let inst = Instance::random(config, &mut rng)?;
    let d = config.width;
    let n = param_len(d);
    let theta = inst.theta.value(0).clone();
    let x = BatchState::from_vec(d, random_vec(&mut rng, config.samples * d, 1.0))?;
    let p = BatchState::from_vec(d, random_vec(&mut rng, config.samples * d, 1.0))?;
    let field = inst.field;
    let mut checks = Vec::new();
    let mut push = |name: &str, error: f64, tolerance: f64, passed: bool| {
        checks.push(CheckResult { name: name.into(), error, tolerance, passed });
    };

    // vjp_state against (p, F(x, θ)) as a function of x
    let mut analytic = field.vjp_state(&x, &theta, &p)?.into_vec();
    if config.fault == Some(Fault::VjpState) {
        analytic.iter_mut().for_each(|v| *v *= 1.01);
    }
    let phi_x = |v: &[f64]| {
        let xs = BatchState::from_vec(d, v.to_vec()).expect("state");
        crate::linalg::dot(field.eval(&xs, &theta).expect("eval").as_slice(), p.as_slice())
    };
    let fd: Vec<f64> = (0..x.as_slice().len())
        .map(|j| fd_directional(&phi_x, x.as_slice(), &unit(x.as_slice().len(), j), FD_STEP))
        .collect();
    let e = max_relative_error(&analytic, &fd);
    push("vjp_state", e, config.tolerance, e < config.tolerance);

    let analytic = field.vjp_params(&x, &theta, &p)?.into_vec();
    let phi_theta = |v: &[f64]| {
        let th = ThetaVec::from_vec(d, v.to_vec()).expect("theta");
        crate::linalg::dot(field.eval(&x, &th).expect("eval").as_slice(), p.as_slice())
    };
    let fd: Vec<f64> = (0..n)
        .map(|j| fd_directional(&phi_theta, theta.as_slice(), &unit(n, j), FD_STEP))
        .collect();
    let e = max_relative_error(&analytic, &fd);
    push("vjp_params", e, config.tolerance, e < config.tolerance);

    let mut worst: f64 = 0.0;
    let binary = TaskHead::new(HeadKind::BinarySigmoid, gaussian_matrix(&mut rng, 1, d, 1.0))?;
    let binary_labels = Labels::binary((0..config.samples).map(|i| (i % 2) as f64).collect())?;
    for (head, labels) in [(&inst.head, &inst.labels), (&binary, &binary_labels)] {
        let analytic = head.terminal_gradient(&x, labels)?.into_vec();
        let loss = |v: &[f64]| {
            head.loss(&BatchState::from_vec(d, v.to_vec()).expect("state"), labels)
                .expect("loss")
        };
        let fd: Vec<f64> = (0..x.as_slice().len())
            .map(|j| fd_directional(&loss, x.as_slice(), &unit(x.as_slice().len(), j), FD_STEP))
            .collect();
        worst = worst.max(max_relative_error(&analytic, &fd));
    }
    push("terminal_gradient", worst, config.tolerance, worst < config.tolerance);

    let mut analytic = inst.nodal_gradient()?;
    if config.fault == Some(Fault::NodalGradient) {
        analytic[0] += 1e-3 * analytic[0].abs().max(1e-3);
    }
    let flat = inst.theta.flatten();
    let fd: Vec<f64> = (0..flat.len())
        .map(|j| fd_directional(&|v: &[f64]| inst.objective(v), &flat, &unit(flat.len(), j), FD_STEP))
        .collect();
    let e = max_relative_error(&analytic, &fd);
    push("nodal_gradient", e, config.tolerance, e < config.tolerance);

    let h1_errors = h1_refinement_study(config, 3)?;
    let min_ratio = h1_errors
        .windows(2)
        .map(|w| w[0].relative_error / w[1].relative_error)
        .fold(f64::INFINITY, f64::min);
    push("h1_gradient_consistency", min_ratio, config.min_ratio, min_ratio >= config.min_ratio);

    Ok(GradcheckReport { checks, h1_errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_passes() {
        let report = run(&GradcheckConfig::default()).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn faults_are_detected() {
        for fault in [Fault::VjpState, Fault::NodalGradient] {
            let config = GradcheckConfig { fault: Some(fault), ..GradcheckConfig::default() };
            assert!(!run(&config).unwrap().passed());
        }
    }

    #[test]
    fn deterministic() {
        let a = run(&GradcheckConfig::default()).unwrap();
        let b = run(&GradcheckConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
