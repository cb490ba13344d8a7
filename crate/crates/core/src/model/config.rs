use serde::{Deserialize, Serialize};

use super::coefficients::{coefficient, INPUT_SQ, MEMORY_SQ, OBS_SQ};
use crate::error::{Error, Result};

/// Fixed hyperparameters of an alternator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternatorConfig {
    pub obs_dim: usize,
    pub feat_dim: usize,
    pub seq_len: usize,
    pub sigma_x: f64,
    pub sigma_z: f64,
    /// `α_1..α_T`; index 0 holds `α_1`.
    pub alpha: Vec<f64>,
}

impl AlternatorConfig {
    pub fn constant_alpha(
        obs_dim: usize,
        feat_dim: usize,
        seq_len: usize,
        sigma_x: f64,
        sigma_z: f64,
        alpha: f64,
    ) -> Self {
        Self {
            obs_dim,
            feat_dim,
            seq_len,
            sigma_x,
            sigma_z,
            alpha: vec![alpha; seq_len],
        }
    }

    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.obs_dim == 0 || self.feat_dim == 0 {
            return Err(Error::Config("obs_dim and feat_dim must be >= 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be >= 1".into()));
        }
        for (name, s) in [("sigma_x", self.sigma_x), ("sigma_z", self.sigma_z)] {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {s}")));
            }
        }
        if self.sigma_z >= self.sigma_x {
            return Err(Error::Config(format!(
                "sigma_z ({}) must be smaller than sigma_x ({})",
                self.sigma_z, self.sigma_x
            )));
        }
        if self.alpha.len() != self.seq_len {
            return Err(Error::Config(format!(
                "alpha schedule has {} entries for seq_len {}",
                self.alpha.len(),
                self.seq_len
            )));
        }
        let upper = 1.0 - self.sigma_z * self.sigma_z;
        if let Some((t, a)) = self
            .alpha
            .iter()
            .enumerate()
            .find(|(_, &a)| !(0.0..=upper).contains(&a))
        {
            return Err(Error::Config(format!(
                "alpha[{}] = {a} outside [0, 1 - sigma_z^2 = {upper}]",
                t + 1
            )));
        }
        let mut warnings = Vec::new();
        if self.feat_dim >= self.obs_dim {
            warnings.push(format!(
                "feat_dim ({}) is not smaller than obs_dim ({})",
                self.feat_dim, self.obs_dim
            ));
        }
        Ok(warnings)
    }

    /// `α_t` for 1-based `t`; steps past the schedule reuse its last entry.
    pub fn alpha_at(&self, t: usize) -> f64 {
        let idx = t.max(1).min(self.alpha.len()) - 1;
        self.alpha[idx]
    }

    pub fn check_alpha(&self, alpha: f64) -> Result<()> {
        let upper = 1.0 - self.sigma_z * self.sigma_z;
        if !(0.0..=upper).contains(&alpha) {
            return Err(Error::contract(format!(
                "alpha {alpha} outside [0, {upper}]"
            )));
        }
        Ok(())
    }

    /// `√(1 − σ_x²)`.
    pub fn obs_scale(&self) -> f64 {
        coefficient(OBS_SQ, 0.0, self.sigma_z, self.sigma_x)
    }

    /// `(√α, √(1 − α − σ_z²))`.
    pub fn blend(&self, alpha: f64) -> (f64, f64) {
        (
            coefficient(INPUT_SQ, alpha, self.sigma_z, self.sigma_x),
            coefficient(MEMORY_SQ, alpha, self.sigma_z, self.sigma_x),
        )
    }

    /// `D_z σ_z² / (D_x σ_x²)`, the observation-term weight of the loss.
    pub fn obs_loss_weight(&self) -> f64 {
        (self.feat_dim as f64 * self.sigma_z * self.sigma_z)
            / (self.obs_dim as f64 * self.sigma_x * self.sigma_x)
    }

    /// Isotropic variance of the observation kernel used for scoring.
    pub fn obs_density_variance(&self) -> f64 {
        self.obs_dim as f64 * self.sigma_x * self.sigma_x
    }

    /// Stable text used to key checkpoints to a model shape.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
