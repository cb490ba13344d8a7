//! The alternator: an observation network `f_θ` and a feature network `g_φ`
//! that take turns emitting `x_t` from `z_{t−1}` and `z_t` from
//! `(z_{t−1}, x_t)`.
//!
//! All plain (tape-free) operations work on batches: each row of an input
//! matrix is one independent vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::AlternatorConfig;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Activation, Mlp, MlpSpec, MlpVars, OutputActivation, Tape, Tensor, Var};

/// Hidden layout shared by both networks when building a fresh model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![10, 10],
            activation: Activation::Tanh,
        }
    }
}

/// Weights of the observation network (θ) and the feature network (φ).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `f_θ: ℝ^{D_z} → ℝ^{D_x}`
    pub otn: Mlp,
    /// `g_φ: ℝ^{D_x} → ℝ^{D_z}`
    pub ftn: Mlp,
}

impl ModelParams {
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.otn.tensors_mut();
        out.extend(self.ftn.tensors_mut());
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.otn.named_tensors("otn");
        out.extend(self.ftn.named_tensors("ftn"));
        out
    }

    pub fn num_params(&self) -> usize {
        self.otn.num_params() + self.ftn.num_params()
    }
}

/// Tape handles for both networks.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub otn: MlpVars,
    pub ftn: MlpVars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternator {
    config: AlternatorConfig,
    params: ModelParams,
}

fn normals<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("noise shape")
}

fn axpby(a: f64, x: &Tensor, b: f64, y: &Tensor) -> Result<Tensor> {
    x.zip_map(y, |xi, yi| a * xi + b * yi)
}

impl Alternator {
    pub fn new(config: AlternatorConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let (o, f) = (params.otn.spec(), params.ftn.spec());
        if o.input_dim != config.feat_dim || o.output_dim != config.obs_dim {
            return Err(Error::dim(
                "Alternator::new (otn)",
                &[config.feat_dim, config.obs_dim],
                &[o.input_dim, o.output_dim],
            ));
        }
        if f.input_dim != config.obs_dim || f.output_dim != config.feat_dim {
            return Err(Error::dim(
                "Alternator::new (ftn)",
                &[config.obs_dim, config.feat_dim],
                &[f.input_dim, f.output_dim],
            ));
        }
        Ok(Self { config, params })
    }

    pub fn init<R: Rng + ?Sized>(config: AlternatorConfig, net: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let spec = |i, o| MlpSpec {
            input_dim: i,
            hidden_dims: net.hidden_dims.clone(),
            output_dim: o,
            activation: net.activation,
            output_activation: OutputActivation::Identity,
        };
        let otn = Mlp::init(spec(config.feat_dim, config.obs_dim), rng)?;
        let ftn = Mlp::init(spec(config.obs_dim, config.feat_dim), rng)?;
        Self::new(config, ModelParams { otn, ftn })
    }

    pub fn config(&self) -> &AlternatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// `z_0 ~ N(0, I)`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        normals(rng, 1, self.config.feat_dim).into_data()
    }

    pub fn sample_prior_batch<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Tensor {
        normals(rng, n, self.config.feat_dim)
    }

    /// `√(1 − σ_x²) · f_θ(z_{t−1})`.
    pub fn obs_mean(&self, z_prev: &Tensor) -> Result<Tensor> {
        Ok(self.params.otn.forward(z_prev)?.scale(self.config.obs_scale()))
    }

    /// `√α_t · g_φ(x_t) + √(1 − α_t − σ_z²) · z_{t−1}`.
    pub fn latent_mean(&self, x: &Tensor, z_prev: &Tensor, alpha: f64) -> Result<Tensor> {
        self.config.check_alpha(alpha)?;
        if x.rows() != z_prev.rows() {
            return Err(Error::dim("latent_mean", &[x.rows()], &[z_prev.rows()]));
        }
        let (a, m) = self.config.blend(alpha);
        let g = self.params.ftn.forward(x)?;
        axpby(a, &g, m, z_prev)
    }

    /// Draws `x_t` from the observation kernel given `z_{t−1}` (one draw per row).
    pub fn sample_obs<R: Rng + ?Sized>(&self, rng: &mut R, z_prev: &Tensor) -> Result<Tensor> {
        let mean = self.obs_mean(z_prev)?;
        let eps = normals(rng, mean.rows(), self.config.obs_dim);
        axpby(1.0, &mean, self.config.sigma_x, &eps)
    }

    /// Draws `z_t` from the feature kernel given `(x_t, z_{t−1})`.
    pub fn sample_feature<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x: &Tensor,
        z_prev: &Tensor,
        alpha: f64,
    ) -> Result<Tensor> {
        let mean = self.latent_mean(x, z_prev, alpha)?;
        let eps = normals(rng, mean.rows(), self.config.feat_dim);
        axpby(1.0, &mean, self.config.sigma_z, &eps)
    }

    /// One alternation: `x_t` then `z_t`, with noise scales `σ_x` and `σ_z`.
    ///
    /// Draw order is all of `ε_x` then all of `ε_z`.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        z_prev: &Tensor,
        alpha: f64,
    ) -> Result<(Tensor, Tensor)> {
        self.config.check_alpha(alpha)?;
        let x = self.sample_obs(rng, z_prev)?;
        let z = self.sample_feature(rng, &x, z_prev, alpha)?;
        Ok((x, z))
    }

    /// Ancestral sampling of a length-`steps` trajectory.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> Result<Trajectory> {
        if steps == 0 {
            return Err(Error::contract("generate needs at least one step"));
        }
        let z0 = Tensor::row_vector(&self.sample_prior(rng));
        let mut xs = Vec::with_capacity(steps);
        let mut zs = vec![z0.data().to_vec()];
        let mut z = z0;
        for t in 1..=steps {
            let (x, z_next) = self.sample_step(rng, &z, self.config.alpha_at(t))?;
            xs.push(x.into_data());
            zs.push(z_next.data().to_vec());
            z = z_next;
        }
        Ok(Trajectory {
            x: Tensor::from_rows(&xs)?,
            z: Some(Tensor::from_rows(&zs)?),
            mask: Some(vec![true; steps]),
        })
    }

    /// Deterministic encoding `z*_t` for `t = 1..T`, starting from `z*_0 = 0`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() == 0 {
            return Err(Error::contract("encode needs at least one step"));
        }
        if x.cols() != self.config.obs_dim {
            return Err(Error::dim("encode", &[x.rows(), self.config.obs_dim], x.shape()));
        }
        // g_φ has no recurrence, so it runs over all steps at once.
        let g = self.params.ftn.forward(x)?;
        let dz = self.config.feat_dim;
        let mut out = Tensor::zeros(&[x.rows(), dz]);
        let mut prev = vec![0.0; dz];
        for t in 0..x.rows() {
            let alpha = self.config.alpha_at(t + 1);
            self.config.check_alpha(alpha)?;
            let (a, m) = self.config.blend(alpha);
            let row = out.row_mut(t);
            for ((o, gi), pi) in row.iter_mut().zip(g.row(t)).zip(&prev) {
                *o = a * gi + m * pi;
            }
            prev.copy_from_slice(row);
        }
        Ok(out)
    }

    /// Per-step mean of the encodings of several equal-length sequences.
    pub fn encode_population(&self, batch: &[Tensor]) -> Result<Tensor> {
        let first = batch
            .first()
            .ok_or_else(|| Error::contract("encode_population needs a non-empty batch"))?;
        let mut acc = Tensor::zeros(&[first.rows(), self.config.feat_dim]);
        for x in batch {
            if x.rows() != first.rows() {
                return Err(Error::dim("encode_population", &[first.rows()], &[x.rows()]));
            }
            let z = self.encode(x)?;
            acc.data_mut().iter_mut().zip(z.data()).for_each(|(a, v)| *a += v);
        }
        Ok(acc.scale(1.0 / batch.len() as f64))
    }

    /// Runs the generative process, substituting observed `x_t` where the
    /// mask allows and sampling the rest. Unobserved entries of the input are
    /// never read.
    pub fn impute<R: Rng + ?Sized>(&self, rng: &mut R, traj: &Trajectory) -> Result<Trajectory> {
        Ok(self.impute_ensemble(rng, traj, 1)?.pop().expect("one member"))
    }

    /// `members` independent imputations run side by side as rows of one
    /// batch. With one member this is exactly [`Alternator::impute`].
    pub fn impute_ensemble<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        traj: &Trajectory,
        members: usize,
    ) -> Result<Vec<Trajectory>> {
        traj.check()?;
        if members == 0 {
            return Err(Error::contract("impute needs at least one ensemble member"));
        }
        let (dx, dz) = (self.config.obs_dim, self.config.feat_dim);
        if traj.x.cols() != dx {
            return Err(Error::dim("impute", &[traj.len(), dx], traj.x.shape()));
        }
        let steps = traj.len();
        let mut z = self.sample_prior_batch(rng, members);
        let mut xs = vec![Vec::with_capacity(steps * dx); members];
        let mut zs: Vec<Vec<f64>> = (0..members).map(|m| z.row(m).to_vec()).collect();
        for t in 0..steps {
            let alpha = self.config.alpha_at(t + 1);
            self.config.check_alpha(alpha)?;
            let x = if traj.is_observed(t) {
                let row = traj.x.row(t);
                Tensor::new(vec![members, dx], row.repeat(members))?
            } else {
                self.sample_obs(rng, &z)?
            };
            z = self.sample_feature(rng, &x, &z, alpha)?;
            for m in 0..members {
                xs[m].extend_from_slice(x.row(m));
                zs[m].extend_from_slice(z.row(m));
            }
        }
        let mask: Vec<bool> = (0..steps).map(|t| traj.is_observed(t)).collect();
        xs.into_iter()
            .zip(zs)
            .map(|(x, z)| {
                Ok(Trajectory {
                    x: Tensor::new(vec![steps, dx], x)?,
                    z: Some(Tensor::new(vec![steps + 1, dz], z)?),
                    mask: Some(mask.clone()),
                })
            })
            .collect()
    }

    /// Samples `x_{k+1..k+h}` after an observed prefix `x_{1..k}`.
    pub fn forecast<R: Rng + ?Sized>(&self, rng: &mut R, prefix: &Tensor, horizon: usize) -> Result<Tensor> {
        Ok(self.forecast_trajectory(rng, prefix, horizon)?.x.slice_rows(prefix.rows(), prefix.rows() + horizon))
    }

    /// Like [`Alternator::forecast`] but returns the whole completed trajectory.
    pub fn forecast_trajectory<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        prefix: &Tensor,
        horizon: usize,
    ) -> Result<Trajectory> {
        if prefix.rows() == 0 {
            return Err(Error::contract("forecast needs a non-empty prefix"));
        }
        if horizon == 0 {
            return Err(Error::contract("forecast horizon must be >= 1"));
        }
        let k = prefix.rows();
        let mut x = Tensor::full(&[k + horizon, prefix.cols()], f64::NAN);
        x.data_mut()[..prefix.numel()].copy_from_slice(prefix.data());
        let traj = Trajectory {
            x,
            z: None,
            mask: Some((0..k + horizon).map(|t| t < k).collect()),
        };
        self.impute(rng, &traj)
    }

    /// `log N(x; mean, D_x σ_x² I)` for each row pair.
    pub fn obs_log_density(&self, x: &Tensor, mean: &Tensor) -> Result<Vec<f64>> {
        x.expect_same_shape("obs_log_density", mean)?;
        let var = self.config.obs_density_variance();
        let d = self.config.obs_dim as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * var).ln();
        Ok((0..mean.rows())
            .map(|i| {
                let sq: f64 = x.row(i).iter().zip(mean.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
                norm - sq / (2.0 * var)
            })
            .collect())
    }

    /// Per-sample log weights `Σ_t log p_θ(x*_t | z^{(k)}_{t−1})` for `k`
    /// feature trajectories drawn ancestrally from the model.
    pub fn score_terms<R: Rng + ?Sized>(&self, rng: &mut R, x: &Tensor, samples: usize) -> Result<Vec<f64>> {
        if samples == 0 {
            return Err(Error::contract("score needs K >= 1 samples"));
        }
        if x.rows() == 0 || x.cols() != self.config.obs_dim {
            return Err(Error::dim("score_loglik", &[x.rows(), self.config.obs_dim], x.shape()));
        }
        let mut z = self.sample_prior_batch(rng, samples);
        let mut terms = vec![0.0; samples];
        for t in 0..x.rows() {
            let alpha = self.config.alpha_at(t + 1);
            let mean = self.obs_mean(&z)?;
            let target = Tensor::from_rows(&vec![x.row(t).to_vec(); samples])?;
            for (acc, lp) in terms.iter_mut().zip(self.obs_log_density(&target, &mean)?) {
                *acc += lp;
            }
            if t + 1 < x.rows() {
                let eps = normals(rng, samples, self.config.obs_dim);
                let x_model = axpby(1.0, &mean, self.config.sigma_x, &eps)?;
                z = self.sample_feature(rng, &x_model, &z, alpha)?;
            }
        }
        Ok(terms)
    }

    /// Monte Carlo estimate of `log p(x*_{1:T})`.
    pub fn score_loglik<R: Rng + ?Sized>(&self, rng: &mut R, x: &Tensor, samples: usize) -> Result<f64> {
        let terms = self.score_terms(rng, x, samples)?;
        Ok(log_sum_exp(&terms) - (samples as f64).ln())
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        ModelVars {
            otn: self.params.otn.register(tape, trainable),
            ftn: self.params.ftn.register(tape, trainable),
        }
    }

    /// Recorded version of [`Alternator::obs_mean`].
    pub fn obs_mean_tape(&self, tape: &mut Tape, vars: &ModelVars, z_prev: Var) -> Result<Var> {
        let f = self.params.otn.forward_tape(tape, &vars.otn, z_prev)?;
        tape.scale(f, self.config.obs_scale())
    }

    /// Recorded version of [`Alternator::latent_mean`] with one `α` per row.
    pub fn latent_mean_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        x: Var,
        z_prev: Var,
        alphas: &[f64],
    ) -> Result<Var> {
        for &a in alphas {
            self.config.check_alpha(a)?;
        }
        let g = self.params.ftn.forward_tape(tape, &vars.ftn, x)?;
        let (input_w, memory_w) = if alphas.windows(2).all(|w| w[0] == w[1]) && !alphas.is_empty() {
            let (a, m) = self.config.blend(alphas[0]);
            (tape.scale(g, a)?, tape.scale(z_prev, m)?)
        } else {
            let (a, m): (Vec<f64>, Vec<f64>) = alphas.iter().map(|&al| self.config.blend(al)).unzip();
            (tape.scale_rows(g, a)?, tape.scale_rows(z_prev, m)?)
        };
        tape.add(input_w, memory_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Single-layer linear networks with identity-like weights.
    fn identity_model(dx: usize, dz: usize, sigma_x: f64, sigma_z: f64, alpha: f64) -> Alternator {
        let eye = |i: usize, o: usize| {
            let mut w = Tensor::zeros(&[i, o]);
            for k in 0..i.min(o) {
                w.set(k, k, 1.0);
            }
            w
        };
        let otn = Mlp::from_layers(
            MlpSpec::new(dz, vec![], dx),
            vec![Dense { weight: eye(dz, dx), bias: Tensor::zeros(&[1, dx]) }],
        )
        .unwrap();
        let ftn = Mlp::from_layers(
            MlpSpec::new(dx, vec![], dz),
            vec![Dense { weight: eye(dx, dz), bias: Tensor::zeros(&[1, dz]) }],
        )
        .unwrap();
        let config = AlternatorConfig::constant_alpha(dx, dz, 4, sigma_x, sigma_z, alpha);
        Alternator::new(config, ModelParams { otn, ftn }).unwrap()
    }

    fn random_model(seed: u64) -> Alternator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = AlternatorConfig::constant_alpha(4, 2, 6, 0.3, 0.1, 0.3);
        Alternator::init(config, &NetworkConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn prior_moments_and_determinism() {
        let m = identity_model(4, 3, 0.3, 0.1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let z = m.sample_prior_batch(&mut rng, n);
        for c in 0..3 {
            let mean: f64 = (0..n).map(|i| z.get(i, c)).sum::<f64>() / n as f64;
            // 3 standard errors of a unit-variance mean.
            assert!(mean.abs() < 3.0 * (n as f64).powf(-0.5), "coord {c}: {mean}");
        }
        let a = m.sample_prior(&mut ChaCha8Rng::seed_from_u64(3));
        let b = m.sample_prior(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn obs_mean_of_identity_network() {
        let m = identity_model(3, 2, 0.3, 0.1, 0.3);
        let mu = m.obs_mean(&Tensor::row_vector(&[1.0, 0.0])).unwrap();
        let s = 0.91f64.sqrt();
        assert!((mu.data()[0] - s).abs() < 1e-15);
        assert_eq!(&mu.data()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn obs_mean_vanishes_as_sigma_x_approaches_one() {
        let mut m = random_model(1);
        m.config.sigma_x = (1.0f64 - 1e-12).sqrt();
        let mu = m.obs_mean(&Tensor::row_vector(&[3.0, -2.0])).unwrap();
        assert!(mu.data().iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn batched_calls_match_per_row_calls() {
        let m = random_model(2);
        let z = Tensor::new(vec![3, 2], vec![0.1, -0.3, 1.2, 0.4, -0.8, 2.0]).unwrap();
        let batch = m.obs_mean(&z).unwrap();
        for i in 0..3 {
            let single = m.obs_mean(&Tensor::row_vector(z.row(i))).unwrap();
            assert_eq!(batch.row(i), single.data());
        }
    }

    #[test]
    fn latent_mean_hand_values() {
        let m = identity_model(2, 2, 0.3, 0.1, 0.3);
        let mu = m
            .latent_mean(&Tensor::row_vector(&[1.0, 1.0]), &Tensor::row_vector(&[2.0, 2.0]), 0.3)
            .unwrap();
        let want = 0.3f64.sqrt() + 0.69f64.sqrt() * 2.0;
        assert!(mu.data().iter().all(|v| (v - want).abs() < 1e-12));
    }

    #[test]
    fn latent_mean_boundary_alphas() {
        let m = random_model(3);
        let x1 = Tensor::row_vector(&[0.5, -1.0, 2.0, 0.0]);
        let x2 = Tensor::row_vector(&[-3.0, 1.0, 0.2, 0.7]);
        let z1 = Tensor::row_vector(&[1.0, -1.0]);
        let z2 = Tensor::row_vector(&[-4.0, 0.3]);
        let top = 1.0 - 0.1 * 0.1;
        assert_eq!(m.latent_mean(&x1, &z1, top).unwrap(), m.latent_mean(&x1, &z2, top).unwrap());
        let a = m.latent_mean(&x1, &z1, 0.0).unwrap();
        assert_eq!(a, m.latent_mean(&x2, &z1, 0.0).unwrap());
        assert_eq!(a, z1.scale(0.99f64.sqrt()));
        assert!(matches!(m.latent_mean(&x1, &z1, 0.995), Err(Error::Contract(_))));
        assert!(matches!(m.latent_mean(&x1, &z1, -0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn sample_step_noise_scale() {
        let m = random_model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let z = Tensor::from_rows(&vec![vec![0.3, -0.2]; n]).unwrap();
        let (x, _) = m.sample_step(&mut rng, &z, 0.3).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, c)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((sd / 0.3 - 1.0).abs() < 0.05, "coord {c}: sd {sd}");
        }
    }

    #[test]
    fn sample_step_zero_noise_limit_is_the_means() {
        let mut m = random_model(6);
        m.config.sigma_x = 1e-300;
        m.config.sigma_z = 1e-301;
        let z = Tensor::row_vector(&[0.4, 0.1]);
        let (x, z1) = m.sample_step(&mut ChaCha8Rng::seed_from_u64(1), &z, 0.3).unwrap();
        assert_eq!(x, m.obs_mean(&z).unwrap());
        assert_eq!(z1, m.latent_mean(&x, &z, 0.3).unwrap());
    }

    #[test]
    fn generate_matches_stepwise_calls() {
        let m = random_model(7);
        let traj = m.generate(&mut ChaCha8Rng::seed_from_u64(11), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut z = Tensor::row_vector(&m.sample_prior(&mut rng));
        assert_eq!(traj.z.as_ref().unwrap().row(0), z.data());
        for t in 0..5 {
            let (x, zn) = m.sample_step(&mut rng, &z, 0.3).unwrap();
            assert_eq!(traj.x.row(t), x.data());
            assert_eq!(traj.z.as_ref().unwrap().row(t + 1), zn.data());
            z = zn;
        }
        assert!(m.generate(&mut rng, 0).is_err());
    }

    #[test]
    fn encode_is_recursive_latent_mean() {
        let m = random_model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = m.generate(&mut rng, 6).unwrap().x;
        let enc = m.encode(&x).unwrap();
        let mut prev = Tensor::zeros(&[1, 2]);
        for t in 0..6 {
            let step = m.latent_mean(&Tensor::row_vector(x.row(t)), &prev, 0.3).unwrap();
            for (a, b) in enc.row(t).iter().zip(step.data()) {
                assert!((a - b).abs() < 1e-14);
            }
            prev = step;
        }
        assert_eq!(enc, m.encode(&x).unwrap());
    }

    #[test]
    fn population_encoding_is_mean() {
        let m = random_model(9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Tensor> = (0..4).map(|_| m.generate(&mut rng, 6).unwrap().x).collect();
        let pop = m.encode_population(&xs).unwrap();
        let encs: Vec<Tensor> = xs.iter().map(|x| m.encode(x).unwrap()).collect();
        for i in 0..pop.numel() {
            let mean = encs.iter().map(|e| e.data()[i]).sum::<f64>() / 4.0;
            assert!((pop.data()[i] - mean).abs() < 1e-12);
        }
        assert_eq!(m.encode_population(&xs[..1]).unwrap(), encs[0]);
        assert_eq!(m.encode_population(&[xs[0].clone(), xs[0].clone()]).unwrap(), encs[0]);
        assert!(m.encode_population(&[]).is_err());
    }

    #[test]
    fn impute_with_all_missing_equals_generate() {
        let m = random_model(10);
        let gen = m.generate(&mut ChaCha8Rng::seed_from_u64(5), 6).unwrap();
        let blank = Trajectory {
            x: Tensor::full(&[6, 4], f64::NAN),
            z: None,
            mask: Some(vec![false; 6]),
        };
        let imp = m.impute(&mut ChaCha8Rng::seed_from_u64(5), &blank).unwrap();
        assert_eq!(imp.x, gen.x);
        assert_eq!(imp.z, gen.z);
    }

    #[test]
    fn forecast_is_tail_of_impute() {
        let m = random_model(11);
        let data = m.generate(&mut ChaCha8Rng::seed_from_u64(1), 6).unwrap().x;
        let prefix = data.slice_rows(0, 4);
        let fc = m.forecast(&mut ChaCha8Rng::seed_from_u64(8), &prefix, 2).unwrap();
        let masked = Trajectory {
            x: data.clone(),
            z: None,
            mask: Some(vec![true, true, true, true, false, false]),
        };
        let imp = m.impute(&mut ChaCha8Rng::seed_from_u64(8), &masked).unwrap();
        assert_eq!(fc, imp.x.slice_rows(4, 6));
        assert!(m.forecast(&mut ChaCha8Rng::seed_from_u64(8), &prefix, 0).is_err());
        assert!(m.forecast(&mut ChaCha8Rng::seed_from_u64(8), &Tensor::zeros(&[0, 4]), 2).is_err());
    }

    #[test]
    fn forecast_past_schedule_reuses_last_alpha() {
        let m = random_model(12);
        let prefix = m.generate(&mut ChaCha8Rng::seed_from_u64(1), 6).unwrap().x;
        let fc = m.forecast(&mut ChaCha8Rng::seed_from_u64(2), &prefix, 10).unwrap();
        assert_eq!(fc.shape(), &[10, 4]);
        assert!(fc.is_finite());
    }

    #[test]
    fn score_needs_samples() {
        let m = random_model(13);
        let x = Tensor::zeros(&[2, 4]);
        assert!(matches!(m.score_loglik(&mut ChaCha8Rng::seed_from_u64(0), &x, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn dimension_checks() {
        let m = random_model(14);
        assert!(m.encode(&Tensor::zeros(&[3, 5])).is_err());
        assert!(m.obs_mean(&Tensor::zeros(&[1, 3])).is_err());
        let bad_otn = Mlp::zeros(MlpSpec::new(3, vec![], 4)).unwrap();
        let p = ModelParams { otn: bad_otn, ftn: m.params().ftn.clone() };
        assert!(Alternator::new(m.config().clone(), p).is_err());
    }

    #[test]
    fn ensemble_members_use_observed_rows() {
        let m = random_model(15);
        let data = m.generate(&mut ChaCha8Rng::seed_from_u64(1), 6).unwrap().x;
        let mut x = data.clone();
        x.row_mut(2).fill(f64::NAN);
        let traj = Trajectory {
            x,
            z: None,
            mask: Some(vec![true, true, false, true, true, true]),
        };
        let ens = m.impute_ensemble(&mut ChaCha8Rng::seed_from_u64(2), &traj, 5).unwrap();
        assert_eq!(ens.len(), 5);
        for e in &ens {
            assert!(e.x.is_finite() && e.z.as_ref().unwrap().is_finite());
            assert_eq!(e.x.row(4), data.row(4));
        }
        assert_ne!(ens[0].x.row(2), ens[1].x.row(2));
        assert!(m.impute_ensemble(&mut ChaCha8Rng::seed_from_u64(2), &traj, 0).is_err());
    }
}
