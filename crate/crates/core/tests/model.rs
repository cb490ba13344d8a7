#![allow(clippy::needless_range_loop)]

mod common;

use alternator::numerics::log_sum_exp;
use alternator::Tensor;
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn generated_cycle_has_the_alternating_structure() {
    // Replaying the stream recovers every noise draw, so each x_t must be
    // obs_mean(z_{t−1}) plus σ_x noise and each z_t latent_mean(x_t, z_{t−1})
    // plus σ_z noise, with nothing else feeding in.
    let mut r = rng(1);
    let model = random_model(&mut r, 4, 2, 3);
    let (sx, sz) = (model.config().sigma_x, model.config().sigma_z);
    let traj = model.generate(&mut rng(2), 3).unwrap();
    let z = traj.z.unwrap();
    assert_eq!(traj.x.rows(), 3);

    let mut replay = rng(2);
    let z0 = model.sample_prior_batch(&mut replay, 1);
    assert_eq!(z0.row(0), z.row(0));
    for t in 0..3 {
        let z_prev = z.slice_rows(t, t + 1);
        let x_t = traj.x.slice_rows(t, t + 1);
        let ex: Vec<f64> = (0..4).map(|_| replay.sample(StandardNormal)).collect();
        let ez: Vec<f64> = (0..2).map(|_| replay.sample(StandardNormal)).collect();
        let mx = model.obs_mean(&z_prev).unwrap();
        for i in 0..4 {
            assert!((x_t.data()[i] - (mx.data()[i] + sx * ex[i])).abs() < 1e-12);
        }
        let mz = model.latent_mean(&x_t, &z_prev, model.config().alpha_at(t + 1)).unwrap();
        for j in 0..2 {
            assert!((z.get(t + 1, j) - (mz.data()[j] + sz * ez[j])).abs() < 1e-12);
        }
    }
}

/// Product of Frobenius norms bounds the Lipschitz constant of a tanh MLP.
fn lipschitz_bound(model: &alternator::Alternator) -> f64 {
    model
        .params()
        .ftn
        .layers()
        .iter()
        .map(|l| l.weight.sum_squares().sqrt())
        .product()
}

#[test]
fn encode_is_lipschitz() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let model = random_model(&mut r, 3, 2, 8);
        let l = lipschitz_bound(&model);
        let x = uniform(&mut r, 8, 3, 1.0);
        let delta = uniform(&mut r, 8, 3, 1e-3);
        let xp = x.zip_map(&delta, |a, b| a + b).unwrap();
        let (z1, z2) = (model.encode(&x).unwrap(), model.encode(&xp).unwrap());
        // ‖Δz_t‖ ≤ Σ_{s≤t} c^{t−s} √α_s L ‖δ_s‖ with c the memory weight.
        let mut bound = 0.0;
        for t in 0..8 {
            let (a, c) = model.config().blend(model.config().alpha_at(t + 1));
            let d = delta.row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            bound = c * bound + a * l * d;
            let dz = z1.row(t).iter().zip(z2.row(t)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(dz <= bound * (1.0 + 1e-9), "t={t}: {dz} > {bound}");
        }
        assert_eq!(model.encode(&x).unwrap(), z1);
    }
}

#[test]
fn score_ignores_sample_order_and_shifts() {
    let mut r = rng(4);
    let model = random_model(&mut r, 3, 2, 5);
    let x = uniform(&mut r, 5, 3, 1.0);
    let mut terms = model.score_terms(&mut rng(8), &x, 32).unwrap();
    let base = log_sum_exp(&terms);
    terms.shuffle(&mut r);
    assert!((log_sum_exp(&terms) - base).abs() < 1e-12);
    let shifted: Vec<f64> = terms.iter().map(|t| t + 1234.5).collect();
    assert!((log_sum_exp(&shifted) - (base + 1234.5)).abs() < 1e-9);
}

#[test]
fn score_prefers_model_data_to_time_shuffled_data() {
    let mut r = rng(6);
    let (dx, steps) = (6, 10);
    let model = random_model(&mut r, dx, 2, steps);
    let (mut own, mut shuffled) = (0.0, 0.0);
    for s in 0..50 {
        let x = model.generate(&mut rng(1000 + s), steps).unwrap().x;
        let mut rows = x.to_rows();
        rows.shuffle(&mut r);
        let xp = Tensor::from_rows(&rows).unwrap();
        own += model.score_loglik(&mut rng(s), &x, 200).unwrap();
        shuffled += model.score_loglik(&mut rng(s), &xp, 200).unwrap();
    }
    assert!(own > shuffled, "{own} vs {shuffled}");
}

#[test]
fn score_of_a_generated_sequence_is_finite() {
    let mut r = rng(7);
    let model = random_model(&mut r, 5, 2, 30);
    let x = model.generate(&mut r, 30).unwrap().x;
    assert!(model.score_loglik(&mut r, &x, 64).unwrap().is_finite());
}
