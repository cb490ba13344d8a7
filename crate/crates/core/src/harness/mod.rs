//! Experiment configs, orchestration, sweeps, plots and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod sweep;

pub use config::{profile, AlphaSpec, DataSection, EvalSection, ExperimentConfig, ModelSection, Task, TrainSection};
pub use experiment::{evaluate_run, load_run_model, report, run_experiment, train_run, RunManifest, Seeds};
pub use sweep::{eval_sweep, sweep_mask, SweepMode, SweepRow};
