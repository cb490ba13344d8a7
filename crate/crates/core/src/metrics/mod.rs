//! Point and ensemble forecast metrics.
//!
//! Inputs are `T × D` matrices; ensembles hold `M` such members.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub fn mae(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.expect_same_shape("mae", truth)?;
    Ok(pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.numel() as f64)
}

pub fn mse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.expect_same_shape("mse", truth)?;
    Ok(pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.numel() as f64)
}

/// Pearson correlation over time for each column, averaged over columns.
pub fn pearson_cc(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.expect_same_shape("pearson_cc", truth)?;
    let (t, d) = (pred.rows(), pred.cols());
    let mut total = 0.0;
    for c in 0..d {
        let mp = (0..t).map(|i| pred.get(i, c)).sum::<f64>() / t as f64;
        let mt = (0..t).map(|i| truth.get(i, c)).sum::<f64>() / t as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..t {
            let (a, b) = (pred.get(i, c) - mp, truth.get(i, c) - mt);
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        if !(sxx > 0.0 && syy > 0.0) {
            return Err(Error::contract(format!("column {c} has zero variance; correlation undefined")));
        }
        total += sxy / (sxx.sqrt() * syy.sqrt());
    }
    Ok(total / d as f64)
}

/// Like [`pearson_cc`] but averages only over columns where both inputs vary.
/// Returns `None` when no column qualifies.
pub fn pearson_cc_defined(pred: &Tensor, truth: &Tensor) -> Result<Option<f64>> {
    pred.expect_same_shape("pearson_cc", truth)?;
    let mut values = Vec::new();
    for c in 0..pred.cols() {
        let col = |m: &Tensor| Tensor::new(vec![m.rows(), 1], (0..m.rows()).map(|i| m.get(i, c)).collect());
        match pearson_cc(&col(pred)?, &col(truth)?) {
            Ok(v) => values.push(v),
            Err(Error::Contract(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Tensor>,
    truth: Tensor,
}

impl Ensemble {
    pub fn new(members: Vec<Tensor>, truth: Tensor) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::contract("ensemble needs at least one member"));
        }
        for m in &members {
            m.expect_same_shape("Ensemble::new", &truth)?;
        }
        Ok(Self { members, truth })
    }

    pub fn members(&self) -> &[Tensor] {
        &self.members
    }

    pub fn truth(&self) -> &Tensor {
        &self.truth
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn mean(&self) -> Tensor {
        let mut acc = Tensor::zeros(self.truth.shape());
        for m in &self.members {
            acc.data_mut().iter_mut().zip(m.data()).for_each(|(a, v)| *a += v);
        }
        acc.scale(1.0 / self.size() as f64)
    }

    fn column(&self, k: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.members.iter().map(|m| m.data()[k]));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrpsEstimator {
    /// Empirical-CDF form: spread term divided by `M²`.
    #[default]
    Empirical,
    /// Unbiased form: spread term divided by `M(M − 1)`.
    Fair,
}

/// `mean_m |X_m − y| − ½ · mean_{m,m'} |X_m − X_{m'}|`, averaged over entries.
pub fn crps_ensemble(ens: &Ensemble, estimator: CrpsEstimator) -> Result<f64> {
    let m = ens.size();
    if estimator == CrpsEstimator::Fair && m < 2 {
        return Err(Error::contract("fair CRPS needs at least two members"));
    }
    let n = ens.truth.numel();
    let mut buf = Vec::with_capacity(m);
    let mut total = 0.0;
    for k in 0..n {
        ens.column(k, &mut buf);
        let y = ens.truth.data()[k];
        let skill = buf.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
        // Σ_{m,m'} |X_m − X_{m'}| from the gaps of the sorted members, in
        // O(M log M); every term is non-negative and identical members give 0.
        buf.sort_by(f64::total_cmp);
        let pair_sum: f64 = buf
            .windows(2)
            .enumerate()
            .map(|(i, w)| (w[1] - w[0]) * ((i + 1) * (m - 1 - i)) as f64)
            .sum::<f64>()
            * 2.0;
        let denom = match estimator {
            CrpsEstimator::Empirical => (m * m) as f64,
            CrpsEstimator::Fair => (m * (m - 1)) as f64,
        };
        let entry = skill - 0.5 * pair_sum / denom;
        // The empirical form is an integral of a square; drop rounding residue below 0.
        total += match estimator {
            CrpsEstimator::Empirical => entry.max(0.0),
            CrpsEstimator::Fair => entry,
        };
    }
    Ok(total / n as f64)
}

/// `√(mean ensemble variance) / RMSE(ensemble mean)`, variance with the `M − 1` divisor.
pub fn ssr(ens: &Ensemble) -> Result<f64> {
    let m = ens.size();
    if m < 2 {
        return Err(Error::contract("spread-skill ratio needs at least two members"));
    }
    let mean = ens.mean();
    let n = ens.truth.numel();
    let mut var = 0.0;
    for k in 0..n {
        let mu = mean.data()[k];
        var += ens.members.iter().map(|x| (x.data()[k] - mu).powi(2)).sum::<f64>() / (m - 1) as f64;
    }
    let rmse = mse(&mean, &ens.truth)?.sqrt();
    if rmse == 0.0 {
        return Err(Error::contract("ensemble mean matches truth exactly; spread-skill ratio undefined"));
    }
    Ok((var / n as f64).sqrt() / rmse)
}

/// Mean and standard error of the mean (`0` for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, metric: impl Into<String>, value: f64, stderr: f64) {
        self.rows.push(MetricRow {
            metric: metric.into(),
            value,
            stderr,
        });
    }

    /// Adds `metric` as the mean and standard error of per-sequence values.
    pub fn push_sample(&mut self, metric: impl Into<String>, values: &[f64]) {
        let (m, s) = mean_stderr(values);
        self.push(metric, m, s);
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric).map(|r| r.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("metric json", e.to_string()))
    }

    /// `metric,value,stderr`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,stderr\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:?},{:?}\n", r.metric, r.value, r.stderr));
        }
        out
    }
}
