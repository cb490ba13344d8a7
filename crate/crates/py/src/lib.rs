use std::path::PathBuf;

use alternator::datagen::{make_lorenz_dataset, LorenzDatasetConfig};
use alternator::harness::{load_run_model, profile, run_experiment};
use alternator::metrics::{crps_ensemble, ssr, CrpsEstimator, Ensemble};
use alternator::model::NetworkConfig;
use alternator::training::{seq2seq_predict, train_generative, train_seq2seq, TrainConfig};
use alternator::{Alternator, AlternatorConfig, Error, Tensor, Trajectory};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Matrix = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tensor(rows: &Matrix) -> PyResult<Tensor> {
    Tensor::from_rows(rows).map_err(py_err)
}

fn tensors(seqs: &[Matrix]) -> PyResult<Vec<Tensor>> {
    seqs.iter().map(tensor).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An alternator model: observation network f, feature network g and the
/// noise / mixing hyperparameters.
#[pyclass(name = "Alternator", module = "alternator_py")]
pub struct PyAlternator {
    inner: Alternator,
    network: NetworkConfig,
}

#[pymethods]
impl PyAlternator {
    #[new]
    #[pyo3(signature = (obs_dim, feat_dim, seq_len, sigma_x=0.3, sigma_z=0.1, alpha=0.3, hidden_dims=vec![10, 10], seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        obs_dim: usize,
        feat_dim: usize,
        seq_len: usize,
        sigma_x: f64,
        sigma_z: f64,
        alpha: f64,
        hidden_dims: Vec<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = AlternatorConfig::constant_alpha(obs_dim, feat_dim, seq_len, sigma_x, sigma_z, alpha);
        let network = NetworkConfig {
            hidden_dims,
            ..NetworkConfig::default()
        };
        let inner = Alternator::init(cfg, &network, &mut rng(seed)).map_err(py_err)?;
        Ok(Self { inner, network })
    }

    /// Loads the trained model of a run directory.
    #[staticmethod]
    fn load(run_dir: PathBuf) -> PyResult<Self> {
        let (manifest, inner) = load_run_model(&run_dir).map_err(py_err)?;
        Ok(Self {
            inner,
            network: manifest.network,
        })
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.config().obs_dim
    }

    #[getter]
    fn feat_dim(&self) -> usize {
        self.inner.config().feat_dim
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_params()
    }

    /// Writes a binary checkpoint.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().save(&path).map_err(py_err)
    }

    /// Returns `(x, z)` with `x` of `steps` rows and `z` of `steps + 1` rows.
    #[pyo3(signature = (steps, seed=0))]
    fn generate(&self, steps: usize, seed: u64) -> PyResult<(Matrix, Matrix)> {
        let t = self.inner.generate(&mut rng(seed), steps).map_err(py_err)?;
        Ok((t.x.to_rows(), t.z.expect("generate returns features").to_rows()))
    }

    /// Deterministic features `z*_1..z*_T` of an observation sequence.
    fn encode(&self, x: Matrix) -> PyResult<Matrix> {
        Ok(self.inner.encode(&tensor(&x)?).map_err(py_err)?.to_rows())
    }

    /// Fills steps whose `mask` entry is false (their values are ignored).
    #[pyo3(signature = (x, mask, seed=0))]
    fn impute(&self, x: Matrix, mask: Vec<bool>, seed: u64) -> PyResult<(Matrix, Matrix)> {
        let traj = Trajectory {
            x: tensor(&x)?,
            z: None,
            mask: Some(mask),
        };
        let out = self.inner.impute(&mut rng(seed), &traj).map_err(py_err)?;
        Ok((out.x.to_rows(), out.z.expect("impute returns features").to_rows()))
    }

    #[pyo3(signature = (prefix, horizon, seed=0))]
    fn forecast(&self, prefix: Matrix, horizon: usize, seed: u64) -> PyResult<Matrix> {
        let x = self.inner.forecast(&mut rng(seed), &tensor(&prefix)?, horizon).map_err(py_err)?;
        Ok(x.to_rows())
    }

    /// Monte Carlo log-likelihood with `samples` feature trajectories.
    #[pyo3(signature = (x, samples=100, seed=0))]
    fn score(&self, x: Matrix, samples: usize, seed: u64) -> PyResult<f64> {
        self.inner.score_loglik(&mut rng(seed), &tensor(&x)?, samples).map_err(py_err)
    }

    /// Teacher-forced training on `(x, y)` pairs; returns the per-epoch loss.
    #[pyo3(signature = (x, y, epochs=100, batch_size=10, lr=0.01, seed=0))]
    fn fit_seq2seq(&mut self, x: Vec<Matrix>, y: Vec<Matrix>, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> PyResult<Vec<f64>> {
        let cfg = self.train_config(epochs, batch_size, lr, seed);
        let h = train_seq2seq(&mut self.inner, &tensors(&x)?, &tensors(&y)?, &cfg, None).map_err(py_err)?;
        Ok(h.totals())
    }

    /// Generative training on observation sequences; returns the per-epoch loss.
    #[pyo3(signature = (x, epochs=100, batch_size=10, lr=0.01, seed=0))]
    fn fit_generative(&mut self, x: Vec<Matrix>, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> PyResult<Vec<f64>> {
        let cfg = self.train_config(epochs, batch_size, lr, seed);
        let h = train_generative(&mut self.inner, &tensors(&x)?, &cfg, None).map_err(py_err)?;
        Ok(h.totals())
    }

    fn predict(&self, x: Matrix) -> PyResult<Matrix> {
        Ok(seq2seq_predict(&self.inner, &tensor(&x)?).map_err(py_err)?.to_rows())
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Alternator(obs_dim={}, feat_dim={}, sigma_x={}, sigma_z={}, hidden_dims={:?})",
            c.obs_dim, c.feat_dim, c.sigma_x, c.sigma_z, self.network.hidden_dims
        )
    }
}

impl PyAlternator {
    fn train_config(&self, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size,
            epochs,
            base_lr: lr,
            min_lr: lr * 0.01,
            warmup_epochs: (epochs / 50).min(10),
            ..TrainConfig::lorenz(seed)
        }
    }
}

/// Noisy Lorenz features paired with spike trains. Returns a dict with
/// `features`, `spikes`, `raw`, `train` and `test` (index lists).
#[pyfunction]
#[pyo3(signature = (n_sequences=300, n_train=200, seed=0, steps=None, channels=None))]
fn simulate_lorenz(
    py: Python<'_>,
    n_sequences: usize,
    n_train: usize,
    seed: u64,
    steps: Option<usize>,
    channels: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = LorenzDatasetConfig::lorenz(seed);
    cfg.n_sequences = n_sequences;
    cfg.n_train = n_train;
    if let Some(s) = steps {
        cfg.lorenz.steps = s;
    }
    if let Some(c) = channels {
        cfg.spikes.channels = c;
    }
    let ds = make_lorenz_dataset(&cfg).map_err(py_err)?;
    let rows = |v: &[Tensor]| v.iter().map(Tensor::to_rows).collect::<Vec<_>>();
    let d = pyo3::types::PyDict::new(py);
    d.set_item("features", rows(&ds.features))?;
    d.set_item("spikes", rows(&ds.spikes))?;
    d.set_item("raw", rows(&ds.raw))?;
    d.set_item("train", ds.manifest.train.clone())?;
    d.set_item("test", ds.manifest.test.clone())?;
    Ok(d.into_any().unbind())
}

/// Runs a shipped profile end to end into `out/<name>`; returns its metrics.
#[pyfunction]
#[pyo3(signature = (name, out, seed=None))]
fn run_profile(name: &str, out: PathBuf, seed: Option<u64>) -> PyResult<Vec<(String, f64, f64)>> {
    let mut cfg = profile(name).map_err(py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.join(&cfg.name);
    let report = run_experiment(&cfg, &dir).map_err(py_err)?;
    Ok(report.rows.into_iter().map(|r| (r.metric, r.value, r.stderr)).collect())
}

fn ensemble(members: Vec<Matrix>, truth: Matrix) -> PyResult<Ensemble> {
    Ensemble::new(tensors(&members)?, tensor(&truth)?).map_err(py_err)
}

/// Ensemble CRPS; `fair=True` uses the M(M-1) spread normalization.
#[pyfunction]
#[pyo3(signature = (members, truth, fair=false))]
fn crps(members: Vec<Matrix>, truth: Matrix, fair: bool) -> PyResult<f64> {
    let est = if fair { CrpsEstimator::Fair } else { CrpsEstimator::Empirical };
    crps_ensemble(&ensemble(members, truth)?, est).map_err(py_err)
}

/// Spread-skill ratio of an ensemble.
#[pyfunction]
#[pyo3(name = "ssr")]
fn spread_skill(members: Vec<Matrix>, truth: Matrix) -> PyResult<f64> {
    ssr(&ensemble(members, truth)?).map_err(py_err)
}

#[pymodule]
fn alternator_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAlternator>()?;
    m.add_function(wrap_pyfunction!(simulate_lorenz, m)?)?;
    m.add_function(wrap_pyfunction!(run_profile, m)?)?;
    m.add_function(wrap_pyfunction!(crps, m)?)?;
    m.add_function(wrap_pyfunction!(spread_skill, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
