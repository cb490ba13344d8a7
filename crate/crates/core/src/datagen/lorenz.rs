//! Stochastic Lorenz system integrated with Euler steps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// `z ← z + (drift(z) + s·ε)·dt`
    Drift,
    /// `z ← z + drift(z)·dt + s·√dt·ε`
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub noise_scale: f64,
    pub noise_mode: NoiseMode,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.01,
            steps: 400,
            noise_scale: 1.0,
            noise_mode: NoiseMode::Drift,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.steps == 0 {
            return Err(Error::Config(format!(
                "lorenz needs dt > 0 and steps >= 1, got dt={} steps={}",
                self.dt, self.steps
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Config("lorenz noise_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn drift(&self, z: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (z[1] - z[0]),
            z[0] * (self.rho - z[2]) - z[1],
            z[0] * z[1] - self.beta * z[2],
        ]
    }
}

/// `steps` states after a start drawn uniformly from `[−1, 1]³`.
pub fn simulate_lorenz<R: Rng + ?Sized>(params: &LorenzParams, rng: &mut R) -> Result<Tensor> {
    let z0 = [(); 3].map(|_| rng.random_range(-1.0..=1.0));
    simulate_lorenz_from(params, z0, rng)
}

/// Integrates from `z0`; row `t` holds the state after `t + 1` steps.
pub fn simulate_lorenz_from<R: Rng + ?Sized>(params: &LorenzParams, z0: [f64; 3], rng: &mut R) -> Result<Tensor> {
    params.validate()?;
    let dt = params.dt;
    let mut z = z0;
    let mut out = Vec::with_capacity(params.steps * 3);
    for _ in 0..params.steps {
        let d = params.drift(z);
        let eps: [f64; 3] = [(); 3].map(|_| rng.sample(StandardNormal));
        for c in 0..3 {
            z[c] += match params.noise_mode {
                NoiseMode::Drift => (d[c] + params.noise_scale * eps[c]) * dt,
                NoiseMode::Diffusion => d[c] * dt + params.noise_scale * dt.sqrt() * eps[c],
            };
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulate_lorenz"));
        }
        out.extend_from_slice(&z);
    }
    Tensor::new(vec![params.steps, 3], out)
}

/// Per-column min-max scaling to `[0, 1]`.
pub fn normalize_minmax(z: &Tensor) -> Result<Tensor> {
    let (lo, hi) = column_range(z);
    let mut out = z.clone();
    for c in 0..z.cols() {
        let span = hi[c] - lo[c];
        if !(span > 0.0) {
            return Err(Error::contract(format!("column {c} is constant; cannot normalize")));
        }
        for t in 0..z.rows() {
            out.set(t, c, (z.get(t, c) - lo[c]) / span);
        }
    }
    Ok(out)
}

pub fn column_range(z: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; z.cols()];
    let mut hi = vec![f64::NEG_INFINITY; z.cols()];
    for t in 0..z.rows() {
        for (c, &v) in z.row(t).iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    (lo, hi)
}
