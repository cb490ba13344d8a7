//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
//! Failures print `error: <subcommand>: <message>` to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{profile, DataSection, ExperimentConfig};
use super::experiment::{dataset_for, evaluate_run, load_run_model, report, run_experiment, train_run, Seeds};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::model::{matrix_from_csv, matrix_to_csv, Trajectory};
use crate::numerics::Tensor;

#[derive(Debug, Parser)]
#[command(name = "alternator", version, about = "Alternator sequence models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config (TOML) or a run manifest (JSON) to rerun.
    #[arg(long, conflicts_with = "profile")]
    pub config: Option<PathBuf>,
    /// Shipped profile name (lorenz_seq2seq, lorenz_generative, lorenz_impute_sweep, lorenz_forecast_sweep, smoke).
    #[arg(long)]
    pub profile: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; the run is written to `<out>/<name>`.
    #[arg(long, env = "ALTERNATOR_OUT", default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory produced by `run` or `train`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the Lorenz / spike dataset described by a config or profile.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Override the number of sequences.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simulate (or load) data and train; writes checkpoints and the loss history.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Train then evaluate.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Evaluate a trained run: held-out metrics, sweeps, predictions, plots.
    Eval {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rebuild metric tables of an evaluated run from its metrics.json.
    Report {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sample a trajectory from a trained model.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(short = 'T', long = "steps", visible_alias = "T")]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministically encode an observation CSV into features.
    Encode {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill missing steps (mask column 0, or rows containing `nan`).
    Impute {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample future observations after an observed prefix.
    Forecast {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo log-likelihood of an observation sequence.
    Score {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Train { .. } => "train",
            Command::Run { .. } => "run",
            Command::Eval { .. } => "eval",
            Command::Report { .. } => "report",
            Command::Generate { .. } => "generate",
            Command::Encode { .. } => "encode",
            Command::Impute { .. } => "impute",
            Command::Forecast { .. } => "forecast",
            Command::Score { .. } => "score",
        }
    }
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.profile) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => profile(name)?,
            (None, None) => return Err(Error::Config("one of --config or --profile is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn run_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.join(&cfg.name)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Reads observations from a trajectory CSV; rows containing `nan` count as missing.
fn read_observations(path: &Path) -> Result<Trajectory> {
    let text = read_to_string(path)?;
    let mut traj = match Trajectory::from_csv(&text) {
        Ok(t) => t,
        Err(_) => Trajectory::observed(matrix_from_csv(&text)?),
    };
    let nan_rows: Vec<bool> = (0..traj.len()).map(|t| traj.x.row(t).iter().all(|v| !v.is_nan())).collect();
    let mask = match traj.mask.take() {
        Some(m) => m.iter().zip(&nan_rows).map(|(a, b)| *a && *b).collect(),
        None => nan_rows,
    };
    traj.mask = Some(mask);
    traj.z = None;
    Ok(traj)
}

fn fully_observed(path: &Path) -> Result<Tensor> {
    let traj = read_observations(path)?;
    if traj.mask.as_ref().is_some_and(|m| m.iter().any(|o| !o)) {
        return Err(Error::contract(format!("{} has missing steps", path.display())));
    }
    Ok(traj.x)
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate { exp, n } => {
            let mut cfg = exp.resolve()?;
            if let (Some(n), DataSection::Lorenz { n_sequences, n_train, .. }) = (n, &mut cfg.data) {
                *n_sequences = *n;
                *n_train = (*n_train).min(*n);
            }
            cfg.validate()?;
            let dir = exp.run_dir(&cfg).join("data");
            let ds = dataset_for(&cfg)?;
            ds.save(&dir)?;
            println!(
                "{}: {} sequences, features {}x{}, spikes {}x{}, seed {}",
                dir.display(),
                ds.len(),
                ds.features[0].rows(),
                ds.features[0].cols(),
                ds.spikes[0].rows(),
                ds.spikes[0].cols(),
                Seeds::derive(cfg.seed).data
            );
        }
        Command::Train { exp } => {
            let cfg = exp.resolve()?;
            let dir = exp.run_dir(&cfg);
            let run = train_run(&cfg, &dir)?;
            let last = run.history.reports.last().expect("at least one epoch");
            println!("{}: trained {} epochs, final loss {:.6}", dir.display(), last.epoch + 1, last.total);
        }
        Command::Run { exp } => {
            let cfg = exp.resolve()?;
            let dir = exp.run_dir(&cfg);
            let metrics = run_experiment(&cfg, &dir)?;
            print!("{}", metrics.to_csv());
        }
        Command::Eval { run } => {
            print!("{}", evaluate_run(&run.run)?.to_csv());
        }
        Command::Report { run } => {
            print!("{}", report(&run.run)?);
        }
        Command::Generate { run, steps, seed, out } => {
            let (_, model) = load_run_model(&run.run)?;
            let traj = model.generate(&mut ChaCha8Rng::seed_from_u64(*seed), *steps)?;
            emit(out.as_deref(), &traj.to_csv()?)?;
        }
        Command::Encode { run, input, out } => {
            let (_, model) = load_run_model(&run.run)?;
            let z = model.encode(&fully_observed(input)?)?;
            emit(out.as_deref(), &matrix_to_csv(&z, "z"))?;
        }
        Command::Impute { run, input, seed, out } => {
            let (_, model) = load_run_model(&run.run)?;
            let traj = read_observations(input)?;
            let done = model.impute(&mut ChaCha8Rng::seed_from_u64(*seed), &traj)?;
            emit(out.as_deref(), &done.to_csv()?)?;
        }
        Command::Forecast {
            run,
            input,
            horizon,
            seed,
            out,
        } => {
            let (_, model) = load_run_model(&run.run)?;
            let x = model.forecast(&mut ChaCha8Rng::seed_from_u64(*seed), &fully_observed(input)?, *horizon)?;
            emit(out.as_deref(), &matrix_to_csv(&x, "x"))?;
        }
        Command::Score {
            run,
            input,
            samples,
            seed,
        } => {
            let (_, model) = load_run_model(&run.run)?;
            let ll = model.score_loglik(&mut ChaCha8Rng::seed_from_u64(*seed), &fully_observed(input)?, *samples)?;
            println!("{ll:?}");
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
