use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use layergrow_core::artifacts::{write_atomic, write_json, GridHistory, RunDir};
use layergrow_core::checkpoint::Checkpoint;
use layergrow_core::compare::compare;
use layergrow_core::datasets::DatasetId;
use layergrow_core::gradcheck::{self, Fault, GradcheckConfig};
use layergrow_core::trainer::{self, Mode, Termination, TrainConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_GRADCHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "layergrow", version, about = "Depth-adaptive neural ODE training")]
struct Cli {
    /// Worker threads for batch kernels (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write a run directory
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Print one progress line every N iterations (0 = quiet)
        #[arg(long, default_value_t = 0)]
        progress: usize,
    },
    /// Adaptive vs random vs fixed depth over several seeds
    Compare {
        /// Base configuration (defaults to the dataset preset)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<DatasetId>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Finite-difference checks of all derivatives
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Per-interval error indicators for a saved checkpoint
    Indicators {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Configuration; must match the checkpoint's when given
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/indicators")]
        out: PathBuf,
    },
}

/// Errors tagged with the exit code they map to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_CONFIG, error: e.into() }
}

fn runtime_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

type Outcome = Result<u8, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_error)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_error)
}

fn load_train_config(path: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<TrainConfig, Failure> {
    let mut config: TrainConfig = read_json(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(m) = mode {
        config.mode = m;
    }
    config
        .validate()
        .with_context(|| format!("invalid configuration {}", path.display()))
        .map_err(config_error)?;
    Ok(config)
}

fn cmd_train(config: &Path, seed: Option<u64>, mode: Option<Mode>, out: &Path, progress: usize) -> Outcome {
    let config = load_train_config(config, seed, mode)?;
    let data = config.dataset.load(config.data_seed).map_err(config_error)?;
    let record = trainer::train_observed(&config, &data, |r| {
        if progress > 0 && r.iteration % progress == 0 {
            eprintln!(
                "it {:>5}  loss {:.5}  val_acc {:.4}  K {}",
                r.iteration, r.train_loss, r.val_accuracy, r.intervals
            );
        }
    })
    .map_err(runtime_error)?;
    RunDir::new(out).write_training(&record).map_err(runtime_error)?;
    println!(
        "{} {} seed {}: {:?} after {} iterations, K = {}, val accuracy {:.4}",
        config.dataset.as_str(),
        config.mode.as_str(),
        config.seed,
        record.termination,
        record.iterations,
        record.intervals(),
        record.final_val_accuracy
    );
    Ok(if record.termination == Termination::NonFinite { EXIT_NUMERICAL } else { 0 })
}

fn cmd_compare(config: Option<&Path>, dataset: Option<DatasetId>, seeds: &[u64], out: &Path) -> Outcome {
    let base = match (config, dataset) {
        (Some(path), _) => load_train_config(path, None, None)?,
        (None, Some(DatasetId::Peaks)) => TrainConfig::peaks(),
        (None, Some(DatasetId::SwissRoll)) => TrainConfig::swiss_roll(),
        (None, None) => return Err(config_error(anyhow!("either --config or --dataset is required"))),
    };
    if dataset.is_some_and(|d| d != base.dataset) {
        return Err(config_error(anyhow!("--dataset disagrees with the configuration")));
    }
    let data = base.dataset.load(base.data_seed).map_err(config_error)?;
    let table = compare(&base, &data, seeds).map_err(config_error)?;
    let csv = table.to_csv().map_err(runtime_error)?;
    fs::create_dir_all(out).map_err(runtime_error)?;
    write_atomic(&out.join("comparison.csv"), &csv).map_err(runtime_error)?;
    write_json(&out.join("comparison.json"), &table).map_err(runtime_error)?;
    print!("{}", String::from_utf8_lossy(&csv));
    if table.any_succeeded() {
        Ok(0)
    } else {
        Ok(EXIT_NUMERICAL)
    }
}

fn cmd_gradcheck(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>, fault: Option<Fault>) -> Outcome {
    let mut config: GradcheckConfig = match config {
        Some(path) => read_json(path)?,
        None => GradcheckConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if fault.is_some() {
        config.fault = fault;
    }
    let report = gradcheck::run(&config).map_err(runtime_error)?;
    for c in &report.checks {
        println!(
            "{:<26} {:>12.3e}  (tolerance {:.1e})  {}",
            c.name,
            c.error,
            c.tolerance,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    for level in &report.h1_errors {
        println!("  H1 relative error at K = {:>3}: {:.3e}", level.intervals, level.relative_error);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(runtime_error)?;
        write_json(&dir.join("gradcheck.json"), &report).map_err(runtime_error)?;
    }
    Ok(if report.passed() { 0 } else { EXIT_GRADCHECK })
}

fn cmd_indicators(checkpoint: &Path, config: Option<&Path>, out: &Path) -> Outcome {
    let text = fs::read_to_string(checkpoint)
        .with_context(|| format!("reading {}", checkpoint.display()))
        .map_err(config_error)?;
    let restored = Checkpoint::from_json(&text)
        .and_then(|c| c.restore())
        .with_context(|| format!("loading {}", checkpoint.display()))
        .map_err(config_error)?;
    if let Some(path) = config {
        let given: TrainConfig = read_json(path)?;
        if given != restored.config {
            return Err(config_error(anyhow!("configuration does not match the checkpoint")));
        }
    }
    let config = &restored.config;
    let data = config.dataset.load(config.data_seed).map_err(config_error)?;
    let report = match trainer::indicators(config, &restored.params, &data) {
        Ok(r) => r,
        Err(e @ (layergrow_core::Error::NonFiniteState(_) | layergrow_core::Error::NonFiniteAdjoint(_))) => {
            return Err(Failure { code: EXIT_NUMERICAL, error: e.into() })
        }
        Err(e) => return Err(runtime_error(e)),
    };
    let history = GridHistory::new(&restored.initial_grid, &restored.insertions, restored.params.theta.grid());
    RunDir::new(out).write_indicators(&report, &history).map_err(runtime_error)?;
    println!(
        "{} intervals, largest indicator on interval {} ({:.3e}), estimate {:.3e}",
        report.intervals.len(),
        report.k_star,
        report.intervals[report.k_star - 1].eta,
        report.delta
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let outcome = match &cli.command {
        Command::Train { config, seed, mode, out, progress } => cmd_train(config, *seed, *mode, out, *progress),
        Command::Compare { config, dataset, seeds, out } => cmd_compare(config.as_deref(), *dataset, seeds, out),
        Command::Gradcheck { config, seed, out, inject_fault } => {
            cmd_gradcheck(config.as_deref(), *seed, out.as_deref(), *inject_fault)
        }
        Command::Indicators { checkpoint, config, out } => cmd_indicators(checkpoint, config.as_deref(), out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
