//! Linear warmup followed by cosine annealing, evaluated per epoch.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn constant(lr: f64, total_epochs: usize) -> Self {
        Self {
            base_lr: lr,
            min_lr: lr,
            warmup_epochs: 0,
            total_epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_lr && self.min_lr <= self.base_lr) {
            return Err(Error::Config(format!(
                "schedule needs 0 <= min_lr <= base_lr, got min_lr={} base_lr={}",
                self.min_lr, self.base_lr
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::Config("schedule needs total_epochs >= 1".into()));
        }
        Ok(())
    }

    /// Ramps 0 → `base_lr` over the warmup epochs, then decays along a half
    /// cosine to reach `min_lr` exactly at the final epoch.
    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::contract(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        if epoch < self.warmup_epochs {
            return Ok(self.base_lr * epoch as f64 / self.warmup_epochs as f64);
        }
        let span = self.total_epochs - 1 - self.warmup_epochs.min(self.total_epochs - 1);
        if span == 0 {
            return Ok(self.base_lr);
        }
        let progress = (epoch - self.warmup_epochs) as f64 / span as f64;
        Ok(self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (PI * progress).cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorenz() -> LrSchedule {
        LrSchedule {
            base_lr: 0.01,
            min_lr: 1e-4,
            warmup_epochs: 10,
            total_epochs: 500,
        }
    }

    #[test]
    fn warmup_endpoint_is_base() {
        let s = lorenz();
        s.validate().unwrap();
        assert_eq!(s.lr_at_epoch(10).unwrap(), 0.01);
        assert_eq!(s.lr_at_epoch(0).unwrap(), 0.0);
        assert!((s.lr_at_epoch(5).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn last_epoch_is_min() {
        let s = lorenz();
        // cos(π) = -1 ⇒ min_lr
        let direct = 1e-4 + 0.5 * (0.01 - 1e-4) * (1.0 + PI.cos());
        assert!((s.lr_at_epoch(499).unwrap() - direct).abs() < 1e-9);
        assert!((s.lr_at_epoch(499).unwrap() - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_epoch() {
        assert!(matches!(lorenz().lr_at_epoch(500), Err(Error::Contract(_))));
    }

    #[test]
    fn continuous_at_warmup_boundary() {
        let s = lorenz();
        let before = s.lr_at_epoch(9).unwrap();
        let at = s.lr_at_epoch(10).unwrap();
        let after = s.lr_at_epoch(11).unwrap();
        assert!((at - before) <= 0.01 / 10.0 + 1e-15);
        assert!((at - after).abs() < 1e-5);
    }

    #[test]
    fn monotone_decay_after_warmup() {
        let s = lorenz();
        let lrs: Vec<f64> = (10..500).map(|e| s.lr_at_epoch(e).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_bounds() {
        let mut s = lorenz();
        s.min_lr = 0.1;
        assert!(s.validate().is_err());
    }
}
