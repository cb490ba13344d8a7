//! Helpers shared by the integration tests and the acceptance suite. Each
//! check returns the measured quantity so callers decide how to report it.
#![allow(dead_code, clippy::needless_range_loop)]

use alternator::datagen::{simulate_spikes, spike_probability, ReceptiveField, SpikeSimConfig};
use alternator::metrics::{crps_ensemble, mae, pearson_cc, ssr, CrpsEstimator, Ensemble};
use alternator::model::coefficients::{LinearForm, FEATURE_NOISE_SQ, INPUT_SQ, MEMORY_SQ, OBS_NOISE_SQ, OBS_SQ};
use alternator::numerics::{Activation, Mlp, MlpSpec, Tape, Var};
use alternator::training::{loss_generative, loss_generative_grad, loss_seq2seq, loss_seq2seq_grad};
use alternator::{Alternator, AlternatorConfig, ModelParams, Tensor, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Random small model; biases are randomized too so no gradient is trivially zero.
pub fn random_model(rng: &mut ChaCha8Rng, dx: usize, dz: usize, steps: usize) -> Alternator {
    let sigma_x = rng.random_range(0.2..0.6);
    let sigma_z = rng.random_range(0.05..0.15);
    let upper = 1.0 - sigma_z * sigma_z;
    let alpha = (0..steps).map(|_| rng.random_range(0.0..upper)).collect();
    let cfg = AlternatorConfig {
        obs_dim: dx,
        feat_dim: dz,
        seq_len: steps,
        sigma_x,
        sigma_z,
        alpha,
    };
    let hidden = vec![rng.random_range(2..5); rng.random_range(1..3)];
    let activation = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let mut mk = |i, o| {
        let mut spec = MlpSpec::new(i, hidden.clone(), o);
        spec.activation = activation;
        let mut m = Mlp::init(spec, rng).unwrap();
        for l in m.layers_mut() {
            l.bias = uniform(rng, 1, l.bias.numel(), 0.5);
        }
        m
    };
    let otn = mk(dz, dx);
    let ftn = mk(dx, dz);
    Alternator::new(cfg, ModelParams { otn, ftn }).unwrap()
}

pub fn zero_model(dx: usize, dz: usize, steps: usize, sigma_x: f64, sigma_z: f64, alpha: Vec<f64>) -> Alternator {
    let cfg = AlternatorConfig {
        obs_dim: dx,
        feat_dim: dz,
        seq_len: steps,
        sigma_x,
        sigma_z,
        alpha,
    };
    let otn = Mlp::zeros(MlpSpec::new(dz, vec![3], dx)).unwrap();
    let ftn = Mlp::zeros(MlpSpec::new(dx, vec![3], dz)).unwrap();
    Alternator::new(cfg, ModelParams { otn, ftn }).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-10)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-10)
}

const FD_STEP: f64 = 1e-5;

/// Central differences of `f` over every model parameter, flattened in
/// `tensors_mut` order.
fn fd_params(model: &Alternator, f: impl Fn(&Alternator) -> f64) -> Vec<f64> {
    let mut m = model.clone();
    let sizes: Vec<usize> = m.params_mut().tensors_mut().iter().map(|t| t.numel()).collect();
    let mut out = Vec::new();
    for (ti, n) in sizes.into_iter().enumerate() {
        for k in 0..n {
            let orig = m.params_mut().tensors_mut()[ti].data()[k];
            m.params_mut().tensors_mut()[ti].data_mut()[k] = orig + FD_STEP;
            let up = f(&m);
            m.params_mut().tensors_mut()[ti].data_mut()[k] = orig - FD_STEP;
            let down = f(&m);
            m.params_mut().tensors_mut()[ti].data_mut()[k] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

fn fd_tensor(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let mut t = x.clone();
    (0..t.numel())
        .map(|k| {
            let orig = t.data()[k];
            t.data_mut()[k] = orig + FD_STEP;
            let up = f(&t);
            t.data_mut()[k] = orig - FD_STEP;
            let down = f(&t);
            t.data_mut()[k] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn flat(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn weighted_sum(tape: &mut Tape, out: Var, w: &Tensor) -> Var {
    let wv = tape.constant(w.clone());
    let p = tape.mul(out, wv).unwrap();
    tape.sum(p).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error of tape gradients against finite differences, for
/// one random instance of each differentiable operation.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradErrors {
    pub mlp_forward: f64,
    pub obs_mean: f64,
    pub latent_mean: f64,
    pub loss_generative: f64,
    pub loss_seq2seq: f64,
}

impl GradErrors {
    pub fn max(&self) -> f64 {
        [self.mlp_forward, self.obs_mean, self.latent_mean, self.loss_generative, self.loss_seq2seq]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn worst(self, other: Self) -> Self {
        Self {
            mlp_forward: self.mlp_forward.max(other.mlp_forward),
            obs_mean: self.obs_mean.max(other.obs_mean),
            latent_mean: self.latent_mean.max(other.latent_mean),
            loss_generative: self.loss_generative.max(other.loss_generative),
            loss_seq2seq: self.loss_seq2seq.max(other.loss_seq2seq),
        }
    }
}

pub fn grad_check_instance(seed: u64) -> GradErrors {
    let mut r = rng(seed);
    let dx = r.random_range(1..5);
    let dz = r.random_range(1..4);
    let steps = r.random_range(1..4);
    let batch = r.random_range(1..4);
    let model = random_model(&mut r, dx, dz, steps);

    // mlp_forward: gradients with respect to weights and input.
    let mlp = &model.params().otn;
    let x = uniform(&mut r, batch, dz, 1.0);
    let w = uniform(&mut r, batch, dx, 1.0);
    let mut tape = Tape::new();
    let vars = mlp.register(&mut tape, true);
    let xv = tape.param(x.clone());
    let out = mlp.forward_tape(&mut tape, &vars, xv).unwrap();
    let loss = weighted_sum(&mut tape, out, &w);
    let mut grads = tape.backward(loss).unwrap();
    let mut analytic = flat(&mlp.collect_grads(&mut grads, &vars));
    analytic.extend_from_slice(grads.get(xv).unwrap().data());
    let mut numeric = fd_params(&model, |m| dot(&m.params().otn.forward(&x).unwrap(), &w));
    numeric.truncate(mlp.num_params());
    numeric.extend(fd_tensor(&x, |xp| dot(&mlp.forward(xp).unwrap(), &w)));
    let mlp_forward = rel_err(&analytic, &numeric);

    // obs_mean: parameters of both networks (ftn part is identically zero) and z_prev.
    let z_prev = uniform(&mut r, batch, dz, 1.0);
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let zv = tape.param(z_prev.clone());
    let out = model.obs_mean_tape(&mut tape, &vars, zv).unwrap();
    let loss = weighted_sum(&mut tape, out, &w);
    let mut grads = tape.backward(loss).unwrap();
    let mut analytic = flat(&model.params().otn.collect_grads(&mut grads, &vars.otn));
    analytic.extend(flat(&model.params().ftn.collect_grads(&mut grads, &vars.ftn)));
    analytic.extend_from_slice(grads.get(zv).unwrap().data());
    let mut numeric = fd_params(&model, |m| dot(&m.obs_mean(&z_prev).unwrap(), &w));
    numeric.extend(fd_tensor(&z_prev, |zp| dot(&model.obs_mean(zp).unwrap(), &w)));
    let obs_mean = rel_err(&analytic, &numeric);

    // latent_mean: parameters, x and z_prev.
    let alpha = model.config().alpha_at(1);
    let xin = uniform(&mut r, batch, dx, 1.0);
    let wz = uniform(&mut r, batch, dz, 1.0);
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let xv = tape.param(xin.clone());
    let zv = tape.param(z_prev.clone());
    let out = model
        .latent_mean_tape(&mut tape, &vars, xv, zv, &vec![alpha; batch])
        .unwrap();
    let loss = weighted_sum(&mut tape, out, &wz);
    let mut grads = tape.backward(loss).unwrap();
    let mut analytic = flat(&model.params().otn.collect_grads(&mut grads, &vars.otn));
    analytic.extend(flat(&model.params().ftn.collect_grads(&mut grads, &vars.ftn)));
    analytic.extend_from_slice(grads.get(xv).unwrap().data());
    analytic.extend_from_slice(grads.get(zv).unwrap().data());
    let mut numeric = fd_params(&model, |m| dot(&m.latent_mean(&xin, &z_prev, alpha).unwrap(), &wz));
    numeric.extend(fd_tensor(&xin, |xp| dot(&model.latent_mean(xp, &z_prev, alpha).unwrap(), &wz)));
    numeric.extend(fd_tensor(&z_prev, |zp| dot(&model.latent_mean(&xin, zp, alpha).unwrap(), &wz)));
    let latent_mean = rel_err(&analytic, &numeric);

    // Both losses, with respect to every parameter.
    let xs: Vec<Tensor> = (0..batch).map(|_| uniform(&mut r, steps, dx, 1.0)).collect();
    let zs: Vec<Tensor> = (0..batch).map(|_| uniform(&mut r, steps + 1, dz, 1.0)).collect();
    let (_, g) = loss_generative_grad(&model, &xs, &zs).unwrap();
    let numeric = fd_params(&model, |m| loss_generative(m, &xs, &zs).unwrap().total);
    let loss_generative_err = rel_err(&flat(&g), &numeric);
    let (_, g) = loss_seq2seq_grad(&model, &xs, &zs).unwrap();
    let numeric = fd_params(&model, |m| loss_seq2seq(m, &xs, &zs).unwrap().total);
    let loss_seq2seq_err = rel_err(&flat(&g), &numeric);

    GradErrors {
        mlp_forward,
        obs_mean,
        latent_mean,
        loss_generative: loss_generative_err,
        loss_seq2seq: loss_seq2seq_err,
    }
}

pub fn grad_suite(instances: u64) -> GradErrors {
    (0..instances).map(grad_check_instance).fold(GradErrors::default(), GradErrors::worst)
}

/// Closed form of either loss when both networks output constants
/// (`f ≡ b_f`, `g ≡ b_g`), written with plain loops.
pub fn closed_form_loss(
    x: &[Tensor],
    z: &[Tensor],
    alpha: &[f64],
    sigma_x: f64,
    sigma_z: f64,
    b_f: &[f64],
    b_g: &[f64],
) -> f64 {
    let dx = x[0].cols();
    let dz = z[0].cols();
    let weight = (dz as f64 * sigma_z * sigma_z) / (dx as f64 * sigma_x * sigma_x);
    let obs_scale = (1.0 - sigma_x * sigma_x).sqrt();
    let mut total = 0.0;
    for (xb, zb) in x.iter().zip(z) {
        for t in 0..xb.rows() {
            let a = alpha[t];
            let mem = (1.0 - a - sigma_z * sigma_z).max(0.0).sqrt();
            for j in 0..dz {
                let mu = a.sqrt() * b_g[j] + mem * zb.get(t, j);
                total += (zb.get(t + 1, j) - mu).powi(2);
            }
            for i in 0..dx {
                total += weight * (xb.get(t, i) - obs_scale * b_f[i]).powi(2);
            }
        }
    }
    total / x.len() as f64
}

/// Largest absolute gap between both loss evaluators and the closed form
/// over `instances` zero-weight models. Odd instances use nonzero output biases.
pub fn loss_oracle_gap(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let (dx, dz) = (r.random_range(1..6), r.random_range(1..4));
        let steps = r.random_range(1..6);
        let batch = r.random_range(1..5);
        let sigma_x = r.random_range(0.2..0.9);
        let sigma_z = r.random_range(0.01..0.19_f64).min(sigma_x * 0.9);
        let alpha: Vec<f64> = (0..steps).map(|_| r.random_range(0.0..1.0 - sigma_z * sigma_z)).collect();
        let mut model = zero_model(dx, dz, steps, sigma_x, sigma_z, alpha.clone());
        let (mut b_f, mut b_g) = (vec![0.0; dx], vec![0.0; dz]);
        if seed % 2 == 1 {
            b_f = uniform(&mut r, 1, dx, 1.0).into_data();
            b_g = uniform(&mut r, 1, dz, 1.0).into_data();
            model.params_mut().otn.layers_mut().last_mut().unwrap().bias = Tensor::row_vector(&b_f);
            model.params_mut().ftn.layers_mut().last_mut().unwrap().bias = Tensor::row_vector(&b_g);
        }
        let xs: Vec<Tensor> = (0..batch).map(|_| uniform(&mut r, steps, dx, 2.0)).collect();
        let zs: Vec<Tensor> = (0..batch).map(|_| normal(&mut r, steps + 1, dz)).collect();
        let expected = closed_form_loss(&xs, &zs, &alpha, sigma_x, sigma_z, &b_f, &b_g);
        let g = loss_generative(&model, &xs, &zs).unwrap().total;
        let s = loss_seq2seq(&model, &xs, &zs).unwrap().total;
        worst = worst.max((g - expected).abs()).max((s - expected).abs());
    }
    worst
}

/// Both identities hold on the integer coefficient vectors.
pub fn coefficient_identities_hold() -> bool {
    INPUT_SQ + MEMORY_SQ + FEATURE_NOISE_SQ == LinearForm::ONE && OBS_SQ + OBS_NOISE_SQ == LinearForm::ONE
}

/// Largest evaluated residual of both identities over a grid of configurations
/// and every scheduled `α_t`.
pub fn coefficient_identity_residual() -> f64 {
    let mut worst: f64 = 0.0;
    for &(sx, sz) in &[(0.3, 0.1), (0.5, 0.2), (0.9, 0.05), (0.2, 0.1999)] {
        let steps = 50;
        let upper = 1.0 - sz * sz;
        let alpha: Vec<f64> = (0..steps).map(|t| upper * t as f64 / (steps - 1) as f64).collect();
        for &a in &alpha {
            let feat = INPUT_SQ.eval(a, sz, sx) + MEMORY_SQ.eval(a, sz, sx) + FEATURE_NOISE_SQ.eval(a, sz, sx);
            let obs = OBS_SQ.eval(a, sz, sx) + OBS_NOISE_SQ.eval(a, sz, sx);
            worst = worst.max((feat - 1.0).abs()).max((obs - 1.0).abs());
        }
    }
    worst
}

/// `(memory gap, input gap)`: change in `z*_t` when `z_{t−1}` is perturbed at
/// `α = 1 − σ_z²`, and when `x_t` is perturbed at `α = 0`. Checked on both
/// `latent_mean` and the recursive `encode`.
pub fn degenerate_alpha_gaps(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (dx, dz, steps) = (5, 3, 6);
    let base = random_model(&mut r, dx, dz, steps);
    let sz = base.config().sigma_z;
    let top = 1.0 - sz * sz;
    let with_alpha = |a: f64| {
        let mut cfg = base.config().clone();
        cfg.alpha = vec![a; steps];
        Alternator::new(cfg, base.params().clone()).unwrap()
    };
    let gap = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let memoryless = with_alpha(top);
    let x = uniform(&mut r, 4, dx, 1.0);
    let z1 = uniform(&mut r, 4, dz, 1.0);
    let z2 = uniform(&mut r, 4, dz, 5.0);
    let mut mem_gap = gap(
        &memoryless.latent_mean(&x, &z1, top).unwrap(),
        &memoryless.latent_mean(&x, &z2, top).unwrap(),
    );
    // In `encode`, perturbing x_{t−1} moves z*_{t−1}; z*_t must not follow.
    let xs = uniform(&mut r, steps, dx, 1.0);
    let mut xs2 = xs.clone();
    for v in xs2.row_mut(2) {
        *v += 3.0;
    }
    let (e1, e2) = (memoryless.encode(&xs).unwrap(), memoryless.encode(&xs2).unwrap());
    mem_gap = mem_gap.max(gap(&e1.slice_rows(3, steps), &e2.slice_rows(3, steps)));

    let inputless = with_alpha(0.0);
    let x2 = uniform(&mut r, 4, dx, 5.0);
    let mut in_gap = gap(
        &inputless.latent_mean(&x, &z1, 0.0).unwrap(),
        &inputless.latent_mean(&x2, &z1, 0.0).unwrap(),
    );
    let (e1, e2) = (inputless.encode(&xs).unwrap(), inputless.encode(&xs2).unwrap());
    in_gap = in_gap.max(gap(&e1, &e2));
    (mem_gap, in_gap)
}

/// `(gap to the single-Gaussian oracle at T=1, K=1; gap between log-sum-exp
/// and naive averaging)`.
pub fn scoring_gaps(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (dx, dz) = (r.random_range(1..8), r.random_range(1..4));
    let model = random_model(&mut r, dx, dz, 4);
    let x = uniform(&mut r, 1, dx, 1.0);

    let mut draw = rng(seed ^ 0xabc);
    let z0 = model.sample_prior_batch(&mut draw, 1);
    let mean = model.obs_mean(&z0).unwrap();
    let var = dx as f64 * model.config().sigma_x.powi(2);
    let sq: f64 = x.data().iter().zip(mean.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let oracle = -0.5 * dx as f64 * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var);
    let got = model.score_loglik(&mut rng(seed ^ 0xabc), &x, 1).unwrap();
    let single = (got - oracle).abs();

    let xs = uniform(&mut r, 3, dx, 0.5);
    let k = 16;
    let terms = model.score_terms(&mut rng(seed), &xs, k).unwrap();
    let naive = (terms.iter().map(|t| t.exp()).sum::<f64>() / k as f64).ln();
    let lse = model.score_loglik(&mut rng(seed), &xs, k).unwrap();
    (single, (lse - naive).abs())
}

/// `(fully observed output differs bit-wise, NaN leaked)` over random masks.
pub fn imputation_identity(seed: u64) -> (bool, bool) {
    let mut r = rng(seed);
    let (dx, dz, steps) = (4, 2, 12);
    let model = random_model(&mut r, dx, dz, steps);
    let x = uniform(&mut r, steps, dx, 1.0);
    let full = Trajectory {
        x: x.clone(),
        z: None,
        mask: Some(vec![true; steps]),
    };
    let out = model.impute(&mut rng(seed), &full).unwrap();
    let changed = out.x.data().iter().zip(x.data()).any(|(a, b)| a.to_bits() != b.to_bits());

    let mask: Vec<bool> = (0..steps).map(|_| r.random_bool(0.5)).collect();
    let mut poisoned = x.clone();
    for (t, &obs) in mask.iter().enumerate() {
        if !obs {
            poisoned.row_mut(t).fill(f64::NAN);
        }
    }
    let holes = Trajectory {
        x: poisoned,
        z: None,
        mask: Some(mask.clone()),
    };
    let mut leaked = false;
    for member in model.impute_ensemble(&mut rng(seed), &holes, 3).unwrap() {
        leaked |= !member.x.is_finite() || !member.z.as_ref().unwrap().is_finite();
        for (t, &obs) in mask.iter().enumerate() {
            if obs && member.x.row(t) != x.row(t) {
                leaked = true;
            }
        }
    }
    (changed, leaked)
}

/// Worst `|CRPS − MAE|` at `M = 1` over random instances.
pub fn crps_mae_gap(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(5000 + seed);
        let (t, d) = (r.random_range(1..10), r.random_range(1..5));
        let member = normal(&mut r, t, d);
        let truth = normal(&mut r, t, d);
        let ens = Ensemble::new(vec![member.clone()], truth.clone()).unwrap();
        let crps = crps_ensemble(&ens, CrpsEstimator::Empirical).unwrap();
        worst = worst.max((crps - mae(&member, &truth).unwrap()).abs());
    }
    worst
}

/// SSR of a calibrated ensemble: truth and members are exchangeable draws
/// from `N(μ, s²)` around a random center `μ`.
pub fn calibrated_ssr(seed: u64, members: usize, steps: usize, dims: usize) -> f64 {
    let mut r = rng(seed);
    let center = normal(&mut r, steps, dims).map(|v| 3.0 * v);
    let s = 0.7;
    let draw = |r: &mut ChaCha8Rng| normal(r, steps, dims).zip_map(&center, |e, c| c + s * e).unwrap();
    let truth = draw(&mut r);
    let ens: Vec<Tensor> = (0..members).map(|_| draw(&mut r)).collect();
    ssr(&Ensemble::new(ens, truth).unwrap()).unwrap()
}

/// Worst `|CC(a·truth + b, truth) − 1|` over random `a > 0`, `b`.
pub fn cc_affine_gap(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(9000 + seed);
        let truth = normal(&mut r, 50, 3);
        let a = r.random_range(0.01..100.0);
        let b = r.random_range(-50.0..50.0);
        let pred = truth.map(|v| a * v + b);
        worst = worst.max((pearson_cc(&pred, &truth).unwrap() - 1.0).abs());
    }
    worst
}

/// Field whose tuning term is exactly `rate` at `z = 0`. The history width
/// is so small that the refractory factor is back to exactly 1 one bin after
/// a spike, so the intensity is constant.
pub fn constant_rate_field(rate: f64) -> ReceptiveField {
    ReceptiveField {
        center: vec![0.0],
        width: vec![1.0],
        history_width: 1e-3,
        max_rate: rate.ln(),
    }
}

/// `(empirical rate, expected probability, standard error)` of
/// `simulate_spikes` with constant intensity `λ` over `bins` channel-bins.
pub fn spike_rate(lambda: f64, bins: usize, seed: u64) -> (f64, f64, f64) {
    let channels = 100;
    let steps = bins.div_ceil(channels);
    let config = SpikeSimConfig {
        channels,
        ..SpikeSimConfig::default()
    };
    let fields = vec![constant_rate_field(lambda); channels];
    let z = Tensor::zeros(&[steps, 1]);
    let spikes = simulate_spikes(&z, &fields, &config, &mut rng(seed)).unwrap();
    let p = spike_probability(lambda, config.bin_width);
    let n = spikes.numel() as f64;
    (spikes.sum() / n, p, (p * (1.0 - p) / n).sqrt())
}
