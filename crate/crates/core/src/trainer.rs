//! The layerwise training loop with periodic indicator-driven insertion.

use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, DatasetId};
use crate::dwr::{indicate, IndicatorReport, DEFAULT_SUP_SAMPLES};
use crate::error::{Error, Result};
use crate::field::{BatchState, NeuralField, ThetaVec};
use crate::grid::TimeGrid;
use crate::h1::riesz_gradient;
use crate::linalg::{axpy, gaussian_matrix, DenseMatrix, RngState, SeededRng};
use crate::loss::{HeadKind, TaskHead};
use crate::optimizer::{AdamState, OptimizerKind};
use crate::trajectory::{solve_adjoint, solve_state, AdjointTrajectory, ControlPath, StateTrajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Adaptive,
    Random,
    Fixed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Random => "random",
            Mode::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "random" => Ok(Mode::Random),
            "fixed" => Ok(Mode::Fixed),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

fn default_initial_intervals() -> usize {
    1
}

fn default_sup_samples() -> usize {
    DEFAULT_SUP_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetId,
    pub mode: Mode,
    /// Final time `T`.
    pub t_final: f64,
    /// Network width `d`.
    pub width: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub tol: f64,
    pub it_max: usize,
    pub it_up: usize,
    #[serde(default = "default_initial_intervals")]
    pub initial_intervals: usize,
    /// Depth used in fixed mode.
    #[serde(default)]
    pub k_fixed: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Seed for dataset sampling, independent of the initialization seed.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_sup_samples")]
    pub sup_samples: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Train `W_in` and `W_out` alongside the controls.
    #[serde(default)]
    pub trainable_io: bool,
}

impl TrainConfig {
    pub fn swiss_roll() -> Self {
        Self {
            dataset: DatasetId::SwissRoll,
            mode: Mode::Adaptive,
            t_final: 20.0,
            width: 4,
            lambda: 1e-3,
            learning_rate: 5e-3,
            tol: 0.025,
            it_max: 3000,
            it_up: 50,
            initial_intervals: 1,
            k_fixed: None,
            seed: 0,
            data_seed: 0,
            sup_samples: DEFAULT_SUP_SAMPLES,
            optimizer: OptimizerKind::Adam,
            trainable_io: false,
        }
    }

    pub fn peaks() -> Self {
        Self {
            dataset: DatasetId::Peaks,
            t_final: 10.0,
            width: 20,
            learning_rate: 1e-3,
            tol: 0.05,
            it_max: 2500,
            it_up: 75,
            ..Self::swiss_roll()
        }
    }

    pub fn head(&self) -> HeadKind {
        self.dataset.head()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return fail("t_final must be positive");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return fail("tol must be positive");
        }
        if self.it_up == 0 {
            return fail("it_up must be at least 1");
        }
        if self.width == 0 {
            return fail("width must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.initial_intervals == 0 {
            return fail("initial_intervals must be at least 1");
        }
        if self.mode == Mode::Fixed && self.k_fixed.is_none_or(|k| k == 0) {
            return fail("fixed mode needs k_fixed >= 1");
        }
        Ok(())
    }

    pub fn initial_grid(&self) -> Result<TimeGrid> {
        let intervals = match self.mode {
            Mode::Fixed => self.k_fixed.unwrap_or(0),
            Mode::Adaptive | Mode::Random => self.initial_intervals,
        };
        TimeGrid::uniform(intervals, self.t_final)
    }
}

/// Network parameters at a point of training.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub theta: ControlPath,
    pub w_in: DenseMatrix,
    pub w_out: DenseMatrix,
}

impl Parameters {
    pub fn head(&self, kind: HeadKind) -> Result<TaskHead> {
        TaskHead::new(kind, self.w_out.clone())
    }
}

/// Nodal `θ ~ N(0, 1/d)`, `W_in ~ N(0, 1/d_in)` of shape `d × d_in`,
/// `W_out ~ N(0, 1/d)` of shape `d_out × d`.
pub fn initialize(config: &TrainConfig, input_dim: usize, rng: &mut SeededRng) -> Result<Parameters> {
    config.validate()?;
    let d = config.width;
    let grid = config.initial_grid()?;
    let scale = 1.0 / (d as f64).sqrt();
    let n = crate::field::param_len(d);
    let values = (0..grid.node_count())
        .map(|_| ThetaVec::from_vec(d, (0..n).map(|_| scale * rng.standard_normal()).collect()))
        .collect::<Result<Vec<_>>>()?;
    let theta = ControlPath::new(grid, values)?;
    let w_in = gaussian_matrix(rng, d, input_dim, 1.0 / (input_dim as f64).sqrt());
    let w_out = gaussian_matrix(rng, config.dataset.outputs(), d, scale);
    Ok(Parameters { theta, w_in, w_out })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    #[serde(rename = "K")]
    pub intervals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionEvent {
    pub iteration: usize,
    pub k_star: usize,
    pub t_new: f64,
    /// Grid after the insertion.
    pub grid: TimeGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub config: TrainConfig,
    pub history: Vec<IterationRecord>,
    pub insertions: Vec<InsertionEvent>,
    pub initial_grid: TimeGrid,
    pub params: Parameters,
    pub optimizer: TrainerOptimizer,
    pub rng: RngState,
    pub iterations: usize,
    pub termination: Termination,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub final_val_accuracy: f64,
}

impl TrainRecord {
    pub fn intervals(&self) -> usize {
        self.params.theta.grid().intervals()
    }

    pub fn inserted_nodes(&self) -> Vec<f64> {
        self.insertions.iter().map(|e| e.t_new).collect()
    }
}

/// Optimizer states for the controls and, if trained, the input/output maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerOptimizer {
    pub theta: AdamState,
    pub w_in: Option<AdamState>,
    pub w_out: Option<AdamState>,
}

impl TrainerOptimizer {
    fn new(config: &TrainConfig, params: &Parameters) -> Self {
        let make = |len| AdamState::new(config.optimizer, config.learning_rate, len);
        Self {
            theta: make(params.theta.flatten().len()),
            w_in: config.trainable_io.then(|| make(params.w_in.entries().len())),
            w_out: config.trainable_io.then(|| make(params.w_out.entries().len())),
        }
    }

    fn on_insert(&mut self, n: usize) {
        self.theta.on_insert(n);
        for s in [&mut self.w_in, &mut self.w_out].into_iter().flatten() {
            let len = s.len();
            s.reset(len);
        }
    }
}

/// Forward and adjoint solutions at fixed parameters.
pub struct Evaluation {
    pub x: StateTrajectory,
    pub p: AdjointTrajectory,
    pub loss: f64,
    pub x0: BatchState,
}

/// Solves state and adjoint on the training split.
pub fn evaluate(field: &NeuralField, params: &Parameters, head: &TaskHead, data: &Dataset) -> Result<Evaluation> {
    let x0 = data.train.embed(&params.w_in)?;
    let x = solve_state(field, &params.theta, &x0)?;
    let loss = head.loss(x.terminal(), &data.train.labels)?;
    let pk = head.terminal_gradient(x.terminal(), &data.train.labels)?;
    let p = solve_adjoint(field, &params.theta, &x, &pk)?;
    Ok(Evaluation { x, p, loss, x0 })
}

/// Indicator table for the current parameters on the training split.
pub fn indicators(config: &TrainConfig, params: &Parameters, data: &Dataset) -> Result<IndicatorReport> {
    let field = NeuralField::new(config.width);
    let head = params.head(config.head())?;
    let ev = evaluate(&field, params, &head, data)?;
    indicate(&field, &ev.x, &params.theta, &ev.p, config.lambda, config.sup_samples)
}

fn validation_metrics(field: &NeuralField, params: &Parameters, head: &TaskHead, data: &Dataset) -> Result<(f64, f64)> {
    let x0 = data.validation.embed(&params.w_in)?;
    let x = solve_state(field, &params.theta, &x0)?;
    let labels = &data.validation.labels;
    Ok((head.loss(x.terminal(), labels)?, head.accuracy(x.terminal(), labels)?))
}

fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::NonFiniteState(_) | Error::NonFiniteAdjoint(_))
}

pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainRecord> {
    train_observed(config, data, |_| {})
}

/// Runs the loop and calls `observer` after every recorded iteration.
pub fn train_observed(
    config: &TrainConfig,
    data: &Dataset,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<TrainRecord> {
    config.validate()?;
    if config.dataset != data.id {
        return Err(Error::InvalidArgument(format!(
            "config dataset {:?} does not match data {:?}",
            config.dataset, data.id
        )));
    }
    let mut rng = SeededRng::new(config.seed);
    let params = initialize(config, data.train.input_dim(), &mut rng)?;
    let optimizer = TrainerOptimizer::new(config, &params);
    let run = Run {
        config,
        data,
        field: NeuralField::new(config.width),
        params,
        optimizer,
        rng,
        history: Vec::new(),
        insertions: Vec::new(),
    };
    run.execute(&mut observer)
}

struct Run<'a> {
    config: &'a TrainConfig,
    data: &'a Dataset,
    field: NeuralField,
    params: Parameters,
    optimizer: TrainerOptimizer,
    rng: SeededRng,
    history: Vec<IterationRecord>,
    insertions: Vec<InsertionEvent>,
}

impl Run<'_> {
    fn execute(mut self, observer: &mut dyn FnMut(&IterationRecord)) -> Result<TrainRecord> {
        let initial_grid = self.params.theta.grid().clone();
        let mut termination = Termination::MaxIterations;
        let mut iterations = self.config.it_max;
        for it in 1..=self.config.it_max {
            match self.iterate(it, observer) {
                Ok(true) => {
                    termination = Termination::Converged;
                    iterations = it;
                    break;
                }
                Ok(false) => {}
                Err(e) if is_numerical(&e) => {
                    termination = Termination::NonFinite;
                    iterations = it;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let head = self.params.head(self.config.head())?;
        let (final_train_loss, final_val_loss, final_val_accuracy) =
            match evaluate(&self.field, &self.params, &head, self.data)
                .and_then(|ev| Ok((ev.loss, validation_metrics(&self.field, &self.params, &head, self.data)?)))
            {
                Ok((train, (val, acc))) => (train, val, acc),
                Err(e) if is_numerical(&e) => {
                    termination = Termination::NonFinite;
                    (f64::NAN, f64::NAN, f64::NAN)
                }
                Err(e) => return Err(e),
            };
        Ok(TrainRecord {
            config: self.config.clone(),
            history: self.history,
            insertions: self.insertions,
            initial_grid,
            params: self.params,
            optimizer: self.optimizer,
            rng: self.rng.state(),
            iterations,
            termination,
            final_train_loss,
            final_val_loss,
            final_val_accuracy,
        })
    }

    /// One pass of the loop body. Returns `true` once the loss is below `tol`.
    fn iterate(&mut self, it: usize, observer: &mut dyn FnMut(&IterationRecord)) -> Result<bool> {
        let head = self.params.head(self.config.head())?;
        let ev = evaluate(&self.field, &self.params, &head, self.data)?;
        if !ev.loss.is_finite() {
            return Err(Error::NonFiniteState(self.params.theta.grid().intervals()));
        }
        let (val_loss, val_accuracy) = validation_metrics(&self.field, &self.params, &head, self.data)?;
        let record = IterationRecord {
            iteration: it,
            train_loss: ev.loss,
            val_loss,
            val_accuracy,
            intervals: self.params.theta.grid().intervals(),
        };
        observer(&record);
        self.history.push(record);
        if ev.loss <= self.config.tol {
            return Ok(true);
        }

        self.update(&head, &ev)?;

        if it.is_multiple_of(self.config.it_up) && self.config.mode != Mode::Fixed {
            self.insert(it)?;
        }
        Ok(false)
    }

    fn update(&mut self, head: &TaskHead, ev: &Evaluation) -> Result<()> {
        let g = riesz_gradient(&self.field, &self.params.theta, &ev.x, &ev.p, self.config.lambda)?;
        if !g.is_finite() {
            return Err(Error::NonFiniteAdjoint(0));
        }
        let theta = self.optimizer.theta.step(&self.params.theta, &g)?;
        if self.config.trainable_io {
            let labels = &self.data.train.labels;
            let g_out = head.output_weight_gradient(ev.x.terminal(), labels)?;
            let g_in = input_weight_gradient(ev.p.initial(), &self.data.train.inputs, self.params.w_in.cols());
            if let Some(s) = self.optimizer.w_out.as_mut() {
                s.step_flat(self.params.w_out.entries_mut(), g_out.entries())?;
            }
            if let Some(s) = self.optimizer.w_in.as_mut() {
                s.step_flat(self.params.w_in.entries_mut(), &g_in)?;
            }
        }
        self.params.theta = theta;
        Ok(())
    }

    fn insert(&mut self, it: usize) -> Result<()> {
        let intervals = self.params.theta.grid().intervals();
        let k_star = match self.config.mode {
            Mode::Adaptive => {
                let head = self.params.head(self.config.head())?;
                let ev = evaluate(&self.field, &self.params, &head, self.data)?;
                indicate(&self.field, &ev.x, &self.params.theta, &ev.p, self.config.lambda, self.config.sup_samples)?
                    .k_star
            }
            Mode::Random => 1 + self.rng.index(intervals),
            Mode::Fixed => return Ok(()),
        };
        let t_new = self.params.theta.grid().midpoint(k_star);
        self.params.theta = self.params.theta.insert_midpoint(k_star)?;
        self.optimizer.on_insert(self.params.theta.param_len());
        self.insertions.push(InsertionEvent {
            iteration: it,
            k_star,
            t_new,
            grid: self.params.theta.grid().clone(),
        });
        Ok(())
    }
}

/// `Σᵢ pⁱ(0) (uⁱ)ᵀ` for `x₀ⁱ = W_in uⁱ`, row-major `d × d_in`.
pub fn input_weight_gradient(p0: &BatchState, inputs: &[[f64; 2]], input_dim: usize) -> Vec<f64> {
    let d = p0.width();
    let mut g = vec![0.0; d * input_dim];
    for (pi, u) in p0.blocks().zip(inputs) {
        for (r, &pr) in pi.iter().enumerate() {
            axpy(pr, &u[..input_dim], &mut g[r * input_dim..(r + 1) * input_dim]);
        }
    }
    g
}
