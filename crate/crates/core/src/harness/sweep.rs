//! Forecasting and imputation sweeps over hidden-step rates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::{crps_ensemble, mae, mean_stderr, mse, pearson_cc_defined, ssr, CrpsEstimator, Ensemble, MetricRow};
use crate::model::{Alternator, Trajectory};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Hide the final `⌈rT⌉` steps.
    Forecast,
    /// Hide `round(rT)` steps chosen uniformly at random.
    Impute,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Forecast => "forecast",
            SweepMode::Impute => "impute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub hidden_steps: usize,
    pub metrics: Vec<MetricRow>,
}

/// Observation mask (`true` = observed) for one sequence.
pub fn sweep_mask(mode: SweepMode, rate: f64, steps: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask = vec![true; steps];
    match mode {
        SweepMode::Forecast => {
            // The small offset keeps products like 0.1 · 400 from rounding up a step.
            let hidden = ((rate * steps as f64 - 1e-9).ceil() as usize).clamp(1, steps);
            mask[steps - hidden..].fill(false);
        }
        SweepMode::Impute => {
            let hidden = ((rate * steps as f64).round() as usize).clamp(1, steps);
            for i in sample(rng, steps, hidden) {
                mask[i] = false;
            }
        }
    }
    mask
}

fn hidden_rows(m: &Tensor, hidden: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = hidden.iter().map(|&t| m.row(t).to_vec()).collect();
    Tensor::from_rows(&rows).expect("equal rows")
}

/// Per-rate MAE/MSE/CC of the ensemble mean plus CRPS and SSR at the hidden
/// steps, averaged over sequences with standard errors.
///
/// With `targets`, the model's features `z_t` are scored against them;
/// otherwise the imputed observations are scored against `x`.
pub fn eval_sweep(
    model: &Alternator,
    x: &[Tensor],
    targets: Option<&[Tensor]>,
    mode: SweepMode,
    rates: &[f64],
    members: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if rates.is_empty() {
        return Err(Error::contract("sweep needs at least one rate"));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::contract(format!("sweep rates must lie in (0, 1), got {r}")));
    }
    if x.is_empty() {
        return Err(Error::contract("sweep needs at least one sequence"));
    }
    if let Some(y) = targets {
        if y.len() != x.len() {
            return Err(Error::dim("eval_sweep targets", &[x.len()], &[y.len()]));
        }
    }
    let mut out = Vec::with_capacity(rates.len());
    for (ri, &rate) in rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ri as u64));
        let mut per: [Vec<f64>; 5] = Default::default();
        let mut hidden_steps = 0;
        for (i, xs) in x.iter().enumerate() {
            let mask = sweep_mask(mode, rate, xs.rows(), &mut rng);
            let hidden: Vec<usize> = (0..mask.len()).filter(|&t| !mask[t]).collect();
            hidden_steps = hidden.len();
            // Hidden entries are poisoned so any leak would surface as NaN.
            let mut poisoned = xs.clone();
            for &t in &hidden {
                poisoned.row_mut(t).fill(f64::NAN);
            }
            let traj = Trajectory {
                x: poisoned,
                z: None,
                mask: Some(mask),
            };
            let ens = model.impute_ensemble(&mut rng, &traj, members)?;
            let (preds, truth): (Vec<Tensor>, Tensor) = match targets {
                Some(y) => (
                    ens.iter()
                        .map(|e| hidden_rows(&e.features().expect("imputation returns features"), &hidden))
                        .collect(),
                    hidden_rows(&y[i], &hidden),
                ),
                None => (ens.iter().map(|e| hidden_rows(&e.x, &hidden)).collect(), hidden_rows(xs, &hidden)),
            };
            let ensemble = Ensemble::new(preds, truth)?;
            let mean = ensemble.mean();
            per[0].push(mae(&mean, ensemble.truth())?);
            per[1].push(mse(&mean, ensemble.truth())?);
            if let Some(cc) = pearson_cc_defined(&mean, ensemble.truth())? {
                per[2].push(cc);
            }
            per[3].push(crps_ensemble(&ensemble, CrpsEstimator::Empirical)?);
            if members >= 2 {
                match ssr(&ensemble) {
                    Ok(v) => per[4].push(v),
                    Err(Error::Contract(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        let metrics = ["mae", "mse", "cc", "crps", "ssr"]
            .iter()
            .zip(&per)
            .filter(|(_, v)| !v.is_empty())
            .map(|(name, v)| {
                let (value, stderr) = mean_stderr(v);
                MetricRow {
                    metric: name.to_string(),
                    value,
                    stderr,
                }
            })
            .collect();
        out.push(SweepRow {
            rate,
            hidden_steps,
            metrics,
        });
    }
    Ok(out)
}

/// `rate,hidden_steps,metric,value,stderr`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rate,hidden_steps,metric,value,stderr\n");
    for r in rows {
        for m in &r.metrics {
            out.push_str(&format!("{:?},{},{},{:?},{:?}\n", r.rate, r.hidden_steps, m.metric, m.value, m.stderr));
        }
    }
    out
}
