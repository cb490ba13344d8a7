//! Small linear-Gaussian sequences for smoke tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::Tensor;

/// `z_t = a·z_{t−1} + q·ε`, `x_t = [z_t, −z_t] + r·η` with `z_0 ~ N(0, 1)`.
///
/// Returns `(x: T × 2, z: T × 1)` per sequence.
pub fn linear_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, steps: usize) -> (Vec<Tensor>, Vec<Tensor>) {
    let (a, q, r) = (0.9, 0.3, 0.1);
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut z: f64 = rng.sample(StandardNormal);
        let mut x = Vec::with_capacity(steps * 2);
        let mut zt = Vec::with_capacity(steps);
        for _ in 0..steps {
            z = a * z + q * rng.sample::<f64, _>(StandardNormal);
            x.push(z + r * rng.sample::<f64, _>(StandardNormal));
            x.push(-z + r * rng.sample::<f64, _>(StandardNormal));
            zt.push(z);
        }
        xs.push(Tensor::new(vec![steps, 2], x).expect("toy shape"));
        zs.push(Tensor::new(vec![steps, 1], zt).expect("toy shape"));
    }
    (xs, zs)
}
