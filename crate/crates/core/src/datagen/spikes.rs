//! Receptive-field point-process observations of a feature trajectory.
//!
//! Channel `j` fires with intensity
//! `λ̂_j(z, t) = exp[a_j − Σ_c (z_c − μ_{j,c})² / (2σ_{j,c}²)] · h_j(t)`
//! where `h_j` suppresses firing right after a spike. Each bin of width `Δt`
//! fires with probability `1 − exp(−λ̂_j Δt)`, so outputs are binary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// How a draw from the width prior `U(sigma_min, sigma_max)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthPrior {
    /// The draw is the standard deviation.
    Std,
    /// The draw is the variance; the stored width is its square root.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// `1 − exp(−(t − s_last)² / (2σ_j²))`
    LastSpike,
    /// `Σ_s (1 − exp(−(t − s)² / (2σ_j²)))` over all past spikes.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeSimConfig {
    pub channels: usize,
    pub fr_min: f64,
    pub fr_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Bin width; bin `i` (1-based) sits at time `i · bin_width`.
    pub bin_width: f64,
    pub width_prior: WidthPrior,
    pub history: HistoryMode,
}

impl Default for SpikeSimConfig {
    fn default() -> Self {
        Self {
            channels: 100,
            fr_min: 0.0,
            fr_max: 10.0,
            sigma_min: 0.001,
            sigma_max: 0.01,
            bin_width: 1.0,
            width_prior: WidthPrior::Variance,
            history: HistoryMode::LastSpike,
        }
    }
}

impl SpikeSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("spike simulator needs channels >= 1".into()));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::Config("bin_width must be > 0".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(Error::Config("need 0 < sigma_min <= sigma_max".into()));
        }
        if !(self.fr_min <= self.fr_max) {
            return Err(Error::Config("need fr_min <= fr_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptiveField {
    pub center: Vec<f64>,
    /// Tuning standard deviation per coordinate.
    pub width: Vec<f64>,
    pub history_width: f64,
    pub max_rate: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws `channels` fields with centers spread over `mean ± 2·std` of each
/// coordinate of `z` (rows are time points).
pub fn draw_receptive_fields<R: Rng + ?Sized>(
    z: &Tensor,
    config: &SpikeSimConfig,
    rng: &mut R,
) -> Result<Vec<ReceptiveField>> {
    config.validate()?;
    let n = z.rows() as f64;
    let dims = z.cols();
    let mut stats = Vec::with_capacity(dims);
    for c in 0..dims {
        let mean = (0..z.rows()).map(|t| z.get(t, c)).sum::<f64>() / n;
        let var = (0..z.rows()).map(|t| (z.get(t, c) - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::contract(format!("feature coordinate {c} has zero variance")));
        }
        stats.push((mean, var.sqrt()));
    }
    let width = |rng: &mut R| {
        let d = uniform(rng, config.sigma_min, config.sigma_max);
        match config.width_prior {
            WidthPrior::Std => d,
            WidthPrior::Variance => d.sqrt(),
        }
    };
    Ok((0..config.channels)
        .map(|_| {
            let center = stats.iter().map(|&(m, s)| uniform(rng, m - 2.0 * s, m + 2.0 * s)).collect();
            let w = (0..dims).map(|_| width(rng)).collect();
            let history_width = width(rng);
            let max_rate = uniform(rng, config.fr_min, config.fr_max);
            ReceptiveField {
                center,
                width: w,
                history_width,
                max_rate,
            }
        })
        .collect())
}

impl ReceptiveField {
    pub fn tuning(&self, z: &[f64]) -> f64 {
        let quad: f64 = z
            .iter()
            .zip(&self.center)
            .zip(&self.width)
            .map(|((zc, mu), s)| (zc - mu).powi(2) / (2.0 * s * s))
            .sum();
        (self.max_rate - quad).exp()
    }

    /// Refractory factor; `1` when there is no past spike.
    pub fn history(&self, t: f64, spikes: &[f64], mode: HistoryMode) -> f64 {
        let term = |s: f64| 1.0 - (-(t - s).powi(2) / (2.0 * self.history_width.powi(2))).exp();
        match (spikes.last(), mode) {
            (None, _) => 1.0,
            (Some(&s), HistoryMode::LastSpike) => term(s),
            (Some(_), HistoryMode::Sum) => spikes.iter().map(|&s| term(s)).sum(),
        }
    }
}

pub fn intensity(field: &ReceptiveField, z: &[f64], t: f64, spikes: &[f64], mode: HistoryMode) -> f64 {
    field.tuning(z) * field.history(t, spikes, mode)
}

/// `1 − exp(−λ Δt)`.
pub fn spike_probability(rate: f64, bin_width: f64) -> f64 {
    -(-rate * bin_width).exp_m1()
}

/// Binary `T × J` spike matrix for a normalized feature trajectory.
pub fn simulate_spikes<R: Rng + ?Sized>(
    z: &Tensor,
    fields: &[ReceptiveField],
    config: &SpikeSimConfig,
    rng: &mut R,
) -> Result<Tensor> {
    config.validate()?;
    if let Some(f) = fields.iter().find(|f| f.center.len() != z.cols()) {
        return Err(Error::dim("simulate_spikes", &[z.cols()], &[f.center.len()]));
    }
    let j = fields.len();
    let mut out = Tensor::zeros(&[z.rows(), j]);
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); j];
    for i in 0..z.rows() {
        let t = (i + 1) as f64 * config.bin_width;
        for (c, field) in fields.iter().enumerate() {
            let rate = intensity(field, z.row(i), t, &history[c], config.history);
            let p = spike_probability(rate, config.bin_width);
            if rng.random::<f64>() < p {
                out.set(i, c, 1.0);
                history[c].push(t);
            }
        }
    }
    Ok(out)
}
