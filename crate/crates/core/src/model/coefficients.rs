//! Squared blend coefficients of the two transition kernels.
//!
//! Each squared coefficient is a linear form over `{1, α_t, σ_z², σ_x²}`.
//! The kernels take square roots of these forms, and the forms themselves are
//! what the variance-preservation identities are stated over:
//! `α_t + (1 − α_t − σ_z²) + σ_z² = 1` and `(1 − σ_x²) + σ_x² = 1`.

use std::ops::Add;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearForm {
    pub one: i32,
    pub alpha: i32,
    pub sigma_z_sq: i32,
    pub sigma_x_sq: i32,
}

impl LinearForm {
    pub const ONE: Self = Self::new(1, 0, 0, 0);

    pub const fn new(one: i32, alpha: i32, sigma_z_sq: i32, sigma_x_sq: i32) -> Self {
        Self {
            one,
            alpha,
            sigma_z_sq,
            sigma_x_sq,
        }
    }

    /// The `α` term is added last, so `α = 1 − σ_z²` computed the same way
    /// cancels the memory form to exactly zero.
    pub fn eval(&self, alpha: f64, sigma_z: f64, sigma_x: f64) -> f64 {
        let rest = f64::from(self.one)
            + f64::from(self.sigma_z_sq) * (sigma_z * sigma_z)
            + f64::from(self.sigma_x_sq) * (sigma_x * sigma_x);
        rest + f64::from(self.alpha) * alpha
    }
}

impl Add for LinearForm {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.one + rhs.one,
            self.alpha + rhs.alpha,
            self.sigma_z_sq + rhs.sigma_z_sq,
            self.sigma_x_sq + rhs.sigma_x_sq,
        )
    }
}

/// Weight on `g_φ(x_t)` in the feature mean.
pub const INPUT_SQ: LinearForm = LinearForm::new(0, 1, 0, 0);
/// Weight on `z_{t−1}` in the feature mean.
pub const MEMORY_SQ: LinearForm = LinearForm::new(1, -1, -1, 0);
pub const FEATURE_NOISE_SQ: LinearForm = LinearForm::new(0, 0, 1, 0);
/// Weight on `f_θ(z_{t−1})` in the observation mean.
pub const OBS_SQ: LinearForm = LinearForm::new(1, 0, 0, -1);
pub const OBS_NOISE_SQ: LinearForm = LinearForm::new(0, 0, 0, 1);

/// Square root of a squared-coefficient form, clamping the rounding residue
/// at the `α_t = 1 − σ_z²` boundary to zero.
pub fn coefficient(form: LinearForm, alpha: f64, sigma_z: f64, sigma_x: f64) -> f64 {
    form.eval(alpha, sigma_z, sigma_x).max(0.0).sqrt()
}
