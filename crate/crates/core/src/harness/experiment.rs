//! Experiment runs: simulate or load data, train, evaluate, and persist
//! everything under one self-describing directory.
//!
//! ```text
//! <run>/manifest.json      resolved config, seeds, version, model digest
//! <run>/config.toml        resolved config in TOML
//! <run>/data/              dataset (when simulated by the run)
//! <run>/checkpoints/       periodic checkpoints
//! <run>/model.altn         final parameters (binary), model.txt (text export)
//! <run>/loss.csv           per-epoch losses
//! <run>/metrics.json|csv   evaluation results
//! <run>/sweep_*.csv        per-rate sweep tables
//! <run>/predictions/       held-out predictions (seq2seq)
//! <run>/plots/*.svg        diagnostics
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataSection, ExperimentConfig, Task};
use super::plot::{line_chart, Panel, Series};
use super::sweep::{eval_sweep, sweep_csv, SweepMode};
use crate::datagen::{column_range, derive_seed, make_lorenz_dataset, LorenzDataset, LorenzDatasetConfig};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::metrics::{mae, mse, pearson_cc_defined, MetricReport};
use crate::model::{matrix_to_csv, Alternator, AlternatorConfig, NetworkConfig};
use crate::numerics::{checkpoint::hex, Checkpoint, Tensor};
use crate::training::{seq2seq_predict, train_generative, train_seq2seq, LossHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            data: derive_seed(seed, 0),
            init: derive_seed(seed, 1),
            train: derive_seed(seed, 2),
            eval: derive_seed(seed, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub experiment: ExperimentConfig,
    pub seeds: Seeds,
    pub model: AlternatorConfig,
    pub network: NetworkConfig,
    pub model_digest: String,
    /// Dataset directory, relative to the run directory when simulated by the run.
    pub dataset: PathBuf,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        serde_json::from_str(&read_to_string(&path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn dataset_dir(&self, run_dir: &Path) -> PathBuf {
        if self.dataset.is_absolute() {
            self.dataset.clone()
        } else {
            run_dir.join(&self.dataset)
        }
    }
}

fn lorenz_config(cfg: &ExperimentConfig, seed: u64) -> Option<LorenzDatasetConfig> {
    match &cfg.data {
        DataSection::Lorenz {
            n_sequences,
            n_train,
            lorenz,
            spikes,
        } => Some(LorenzDatasetConfig {
            lorenz: *lorenz,
            spikes: *spikes,
            n_sequences: *n_sequences,
            n_train: *n_train,
            seed,
        }),
        DataSection::Dir { .. } => None,
    }
}

/// The dataset an experiment config describes, generated from `seeds.data` when simulated.
pub fn dataset_for(cfg: &ExperimentConfig) -> Result<LorenzDataset> {
    match (&cfg.data, lorenz_config(cfg, Seeds::derive(cfg.seed).data)) {
        (_, Some(dc)) => make_lorenz_dataset(&dc),
        (DataSection::Dir { path }, None) => LorenzDataset::load(path),
        _ => unreachable!("lorenz sections always produce a dataset config"),
    }
}

pub struct TrainedRun {
    pub manifest: RunManifest,
    pub model: Alternator,
    pub history: LossHistory,
    pub dataset: LorenzDataset,
}

/// Builds the dataset and trains; writes everything except evaluation results.
pub fn train_run(cfg: &ExperimentConfig, run_dir: &Path) -> Result<TrainedRun> {
    cfg.validate()?;
    let seeds = Seeds::derive(cfg.seed);
    let dataset = dataset_for(cfg)?;
    let dataset_path = match &cfg.data {
        DataSection::Lorenz { .. } => {
            dataset.save(&run_dir.join("data"))?;
            PathBuf::from("data")
        }
        DataSection::Dir { path } => std::path::absolute(path).map_err(|e| Error::io(path, e))?,
    };
    let (x, y) = dataset.train_pairs();
    let obs_dim = x[0].cols();
    let model_cfg = cfg
        .model
        .alternator(obs_dim, y[0].cols(), x[0].rows())
        .map_err(|e| Error::Config(format!("model: {e}")))?;
    let network = cfg.model.network();
    let mut model = Alternator::init(model_cfg.clone(), &network, &mut ChaCha8Rng::seed_from_u64(seeds.init))?;
    let train_cfg = cfg.train.to_config(seeds.train);
    let ckpt_dir = run_dir.join("checkpoints");
    let history = match cfg.task {
        Task::Seq2seq => train_seq2seq(&mut model, &x, &y, &train_cfg, Some(&ckpt_dir))?,
        Task::Generative => train_generative(&mut model, &x, &train_cfg, Some(&ckpt_dir))?,
    };
    let ckpt = model.to_checkpoint();
    ckpt.save(&run_dir.join("model.altn"))?;
    write_atomic(&run_dir.join("model.txt"), ckpt.to_text().as_bytes())?;
    write_atomic(&run_dir.join("loss.csv"), history.to_csv().as_bytes())?;
    let log_loss: Vec<f64> = history.totals().iter().map(|v| v.log10()).collect();
    let chart = line_chart(
        &format!("{}: training loss", cfg.name),
        &[Panel {
            title: "log10 total loss per epoch".into(),
            series: vec![Series {
                label: "total",
                values: &log_loss,
                color: "#1f77b4",
            }],
        }],
    );
    write_atomic(&run_dir.join("plots").join("loss.svg"), chart.as_bytes())?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.clone(),
        seeds,
        model: model_cfg,
        network,
        model_digest: hex(&ckpt.digest),
        dataset: dataset_path,
    };
    write_atomic(
        &run_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes(),
    )?;
    write_atomic(&run_dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(TrainedRun {
        manifest,
        model,
        history,
        dataset,
    })
}

/// Loads the trained model of a run directory.
pub fn load_run_model(run_dir: &Path) -> Result<(RunManifest, Alternator)> {
    let manifest = RunManifest::load(run_dir)?;
    let ckpt = Checkpoint::load(&run_dir.join("model.altn"))?;
    let model = Alternator::from_checkpoint(manifest.model.clone(), &manifest.network, &ckpt)?;
    Ok((manifest, model))
}

fn denormalize(pred: &Tensor, raw: &Tensor) -> Tensor {
    let (lo, hi) = column_range(raw);
    let mut out = pred.clone();
    for t in 0..out.rows() {
        for (c, v) in out.row_mut(t).iter_mut().enumerate() {
            *v = lo[c] + *v * (hi[c] - lo[c]);
        }
    }
    out
}

fn metric_base(name: &str) -> &str {
    let last = name.rsplit('.').next().unwrap_or(name);
    last.strip_prefix("raw_").unwrap_or(last)
}

/// Evaluates a trained run and writes metrics, sweeps, predictions and plots.
pub fn evaluate_run(run_dir: &Path) -> Result<MetricReport> {
    let (manifest, model) = load_run_model(run_dir)?;
    let cfg = &manifest.experiment;
    let dataset = LorenzDataset::load(&manifest.dataset_dir(run_dir))?;
    let (x, y) = dataset.test_pairs();
    if x.is_empty() {
        return Err(Error::Config("dataset has no held-out sequences to evaluate".into()));
    }
    let seed = manifest.seeds.eval;
    let mut report = MetricReport::default();

    if cfg.task == Task::Seq2seq {
        let raw = dataset.test_raw();
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (i, (xs, ys)) in x.iter().zip(&y).enumerate() {
            let pred = seq2seq_predict(&model, xs)?;
            cols[0].push(mae(&pred, ys)?);
            cols[1].push(mse(&pred, ys)?);
            if let Some(cc) = pearson_cc_defined(&pred, ys)? {
                cols[2].push(cc);
            }
            let raw_pred = denormalize(&pred, &raw[i]);
            cols[3].push(mae(&raw_pred, &raw[i])?);
            cols[4].push(mse(&raw_pred, &raw[i])?);
            let seq = dataset.manifest.test[i];
            write_atomic(
                &run_dir.join("predictions").join(format!("seq_{seq:04}.csv")),
                matrix_to_csv(&pred, "z").as_bytes(),
            )?;
            if i < cfg.eval.plots {
                write_atomic(
                    &run_dir.join("plots").join(format!("seq_{seq:04}.svg")),
                    feature_chart(&format!("held-out sequence {seq}"), &pred, ys).as_bytes(),
                )?;
            }
        }
        for (name, v) in ["test.mae", "test.mse", "test.cc", "test.raw_mae", "test.raw_mse"].iter().zip(&cols) {
            if !v.is_empty() {
                report.push_sample(*name, v);
            }
        }
    }

    if cfg.eval.wants("loglik") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = x
            .iter()
            .map(|xs| model.score_loglik(&mut rng, xs, cfg.eval.score_samples))
            .collect::<Result<_>>()?;
        report.push_sample("test.loglik", &scores);
    }

    let targets = (cfg.task == Task::Seq2seq).then_some(y.as_slice());
    for (mode, rates, k) in [
        (SweepMode::Forecast, &cfg.eval.forecast_rates, 10),
        (SweepMode::Impute, &cfg.eval.impute_rates, 11),
    ] {
        if rates.is_empty() {
            continue;
        }
        let rows = eval_sweep(&model, &x, targets, mode, rates, cfg.eval.ensemble_size, derive_seed(seed, k))?;
        write_atomic(&run_dir.join(format!("sweep_{}.csv", mode.name())), sweep_csv(&rows).as_bytes())?;
        for r in &rows {
            for m in &r.metrics {
                report.push(format!("{}.r{:.2}.{}", mode.name(), r.rate, m.metric), m.value, m.stderr);
            }
        }
    }

    report.rows.retain(|r| cfg.eval.wants(metric_base(&r.metric)));
    write_atomic(&run_dir.join("metrics.json"), report.to_json().as_bytes())?;
    write_atomic(&run_dir.join("metrics.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

fn feature_chart(title: &str, pred: &Tensor, truth: &Tensor) -> String {
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..truth.cols())
        .map(|c| {
            (
                (0..truth.rows()).map(|t| truth.get(t, c)).collect(),
                (0..pred.rows()).map(|t| pred.get(t, c)).collect(),
            )
        })
        .collect();
    let panels: Vec<Panel<'_>> = cols
        .iter()
        .enumerate()
        .map(|(c, (tv, pv))| Panel {
            title: format!("z_{c}"),
            series: vec![
                Series {
                    label: "true",
                    values: tv,
                    color: "black",
                },
                Series {
                    label: "predicted",
                    values: pv,
                    color: "#d62728",
                },
            ],
        })
        .collect();
    line_chart(title, &panels)
}

/// Trains and evaluates in one go.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: &Path) -> Result<MetricReport> {
    train_run(cfg, run_dir)?;
    evaluate_run(run_dir)
}

/// Regenerates `metrics.csv` and `report.md` from `metrics.json`; returns the markdown.
pub fn report(run_dir: &Path) -> Result<String> {
    let report = MetricReport::from_json(&read_to_string(&run_dir.join("metrics.json"))?)?;
    let manifest = RunManifest::load(run_dir)?;
    let mut md = format!(
        "# {}\n\ntask: {:?}, seed: {}, version: {}\n\n| metric | value | stderr |\n|---|---|---|\n",
        manifest.experiment.name, manifest.experiment.task, manifest.experiment.seed, manifest.version
    );
    for r in &report.rows {
        md.push_str(&format!("| {} | {:.6} | {:.6} |\n", r.metric, r.value, r.stderr));
    }
    write_atomic(&run_dir.join("metrics.csv"), report.to_csv().as_bytes())?;
    write_atomic(&run_dir.join("report.md"), md.as_bytes())?;
    Ok(md)
}
