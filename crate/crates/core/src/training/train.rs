//! Training loops for the generative and sequence-to-sequence objectives.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loss::{combine, generative_nodes, seq2seq_nodes, step_rows, step_terms, LossNodes, LossReport};
use crate::error::{Error, Result};
use crate::model::{Alternator, ModelVars};
use crate::numerics::{AdamConfig, AdamState, LrSchedule, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    /// Stop gradients through the ancestrally sampled features.
    #[serde(default)]
    pub detach_marginal: bool,
    /// Write a checkpoint every this many epochs; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// Lorenz settings: Adam at 0.01, cosine annealing to 1e-4 after 10 warmup epochs, 500 epochs.
    pub fn lorenz(seed: u64) -> Self {
        Self {
            batch_size: 10,
            epochs: 500,
            base_lr: 0.01,
            min_lr: 1e-4,
            warmup_epochs: 10,
            seed,
            detach_marginal: false,
            checkpoint_every: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            min_lr: self.min_lr,
            warmup_epochs: self.warmup_epochs,
            total_epochs: self.epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        self.schedule().validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub reports: Vec<LossReport>,
    pub lrs: Vec<f64>,
}

impl LossHistory {
    pub fn totals(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.total).collect()
    }

    /// `epoch,total,feature_term,observation_term,lr`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,feature_term,observation_term,lr\n");
        for (r, lr) in self.reports.iter().zip(&self.lrs) {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?}\n",
                r.epoch, r.total, r.feature_term, r.observation_term, lr
            ));
        }
        out
    }
}

fn check_dataset(model: &Alternator, x: &[Tensor]) -> Result<usize> {
    let first = x.first().ok_or_else(|| Error::contract("training needs a non-empty dataset"))?;
    let steps = first.rows();
    if steps == 0 {
        return Err(Error::contract("training sequences must have at least one step"));
    }
    for s in x {
        if s.shape() != [steps, model.config().obs_dim] {
            return Err(Error::dim("training data", &[steps, model.config().obs_dim], s.shape()));
        }
    }
    Ok(steps)
}

fn normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
        .expect("noise shape")
}

/// Records the generative loss for one batch, drawing features ancestrally on
/// the tape with explicit `ε` so gradients can flow through them.
fn generative_batch(
    model: &Alternator,
    tape: &mut Tape,
    vars: &ModelVars,
    batch: &[&Tensor],
    detach: bool,
    rng: &mut ChaCha8Rng,
) -> Result<LossNodes> {
    let cfg = model.config();
    let b = batch.len();
    let mut z_prev = tape.constant(normals(rng, b, cfg.feat_dim));
    let mut feature = None;
    let mut observation = None;
    for t in 0..batch[0].rows() {
        let alpha = cfg.alpha_at(t + 1);
        let alphas = vec![alpha; b];
        let mu_x = model.obs_mean_tape(tape, vars, z_prev)?;
        let eps_x = tape.constant(normals(rng, b, cfg.obs_dim).scale(cfg.sigma_x));
        let x_model = tape.add(mu_x, eps_x)?;
        let mu_z = model.latent_mean_tape(tape, vars, x_model, z_prev, &alphas)?;
        let eps_z = tape.constant(normals(rng, b, cfg.feat_dim).scale(cfg.sigma_z));
        let mut z_next = tape.add(mu_z, eps_z)?;
        if detach {
            z_next = tape.detach(z_next);
        }
        let xd = tape.constant(step_rows(batch, t));
        let (f, o) = step_terms(model, tape, vars, xd, z_prev, z_next, &alphas)?;
        feature = Some(match feature {
            None => f,
            Some(acc) => tape.add(acc, f)?,
        });
        observation = Some(match observation {
            None => o,
            Some(acc) => tape.add(acc, o)?,
        });
        z_prev = z_next;
    }
    combine(
        tape,
        feature.expect("non-empty sequence"),
        observation.expect("non-empty sequence"),
        b,
        cfg.obs_loss_weight(),
    )
}

fn apply_gradients(
    model: &mut Alternator,
    tape: &Tape,
    vars: &ModelVars,
    nodes: &LossNodes,
    adam: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let mut grads = tape.backward(nodes.loss)?;
    let mut g = model.params().otn.collect_grads(&mut grads, &vars.otn);
    g.extend(model.params().ftn.collect_grads(&mut grads, &vars.ftn));
    let mut params = model.params_mut().tensors_mut();
    adam.update(&mut params, &g, lr)
}

fn maybe_checkpoint(model: &Alternator, cfg: &TrainConfig, epoch: usize, dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = dir {
        if cfg.checkpoint_every > 0 && (epoch + 1).is_multiple_of(cfg.checkpoint_every) {
            model
                .to_checkpoint()
                .save(&dir.join(format!("epoch_{:05}.altn", epoch + 1)))?;
        }
    }
    Ok(())
}

struct EpochSums {
    feature: f64,
    observation: f64,
}

fn run<F>(
    model: &mut Alternator,
    n: usize,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut batch_step: F,
) -> Result<LossHistory>
where
    F: FnMut(&Alternator, &mut Tape, &ModelVars, &[usize], &mut ChaCha8Rng) -> Result<LossNodes>,
{
    cfg.validate()?;
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam, model.params().named_tensors().into_iter().map(|(_, t)| t));
    let mut order: Vec<usize> = (0..n).collect();
    let weight = model.config().obs_loss_weight();
    let mut history = LossHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at_epoch(epoch)?;
        order.shuffle(&mut rng);
        let mut sums = EpochSums {
            feature: 0.0,
            observation: 0.0,
        };
        for idx in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape, true);
            let nodes = batch_step(model, &mut tape, &vars, idx, &mut rng)?;
            sums.feature += tape.scalar(nodes.feature);
            sums.observation += tape.scalar(nodes.observation);
            apply_gradients(model, &tape, &vars, &nodes, &mut adam, lr)?;
        }
        let nf = n as f64;
        history
            .reports
            .push(LossReport::from_terms(epoch, sums.feature / nf, sums.observation / nf, weight));
        history.lrs.push(lr);
        maybe_checkpoint(model, cfg, epoch, checkpoint_dir)?;
    }
    Ok(history)
}

/// Generative training: each batch samples feature trajectories ancestrally
/// and fits both networks to the data observations.
pub fn train_generative(
    model: &mut Alternator,
    data: &[Tensor],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<LossHistory> {
    check_dataset(model, data)?;
    let detach = cfg.detach_marginal;
    run(model, data.len(), cfg, checkpoint_dir, |m, tape, vars, idx, rng| {
        let batch: Vec<&Tensor> = idx.iter().map(|&i| &data[i]).collect();
        generative_batch(m, tape, vars, &batch, detach, rng)
    })
}

/// Sequence-to-sequence training on pairs `(x_{1:T}, y_{1:T})` with teacher
/// forcing. `y_0` is a fresh prior draw per sequence and batch.
pub fn train_seq2seq(
    model: &mut Alternator,
    x: &[Tensor],
    y: &[Tensor],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<LossHistory> {
    let steps = check_dataset(model, x)?;
    if x.len() != y.len() {
        return Err(Error::dim("train_seq2seq pairs", &[x.len()], &[y.len()]));
    }
    let dz = model.config().feat_dim;
    for s in y {
        if s.shape() != [steps, dz] {
            return Err(Error::dim("train_seq2seq targets", &[steps, dz], s.shape()));
        }
    }
    run(model, x.len(), cfg, checkpoint_dir, |m, tape, vars, idx, rng| {
        let xs: Vec<Tensor> = idx.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<Tensor> = idx
            .iter()
            .map(|&i| {
                let mut data: Vec<f64> = (0..dz).map(|_| rng.sample(StandardNormal)).collect();
                data.extend_from_slice(y[i].data());
                Tensor::new(vec![steps + 1, dz], data)
            })
            .collect::<Result<_>>()?;
        seq2seq_nodes(m, tape, vars, &xs, &ys)
    })
}

/// Deterministic rollout `ŷ_t = √α_t g_φ(x_t) + √(1−α_t−σ_y²) ŷ_{t−1}` from `ŷ_0 = 0`.
pub fn seq2seq_predict(model: &Alternator, x: &Tensor) -> Result<Tensor> {
    model.encode(x)
}

/// Generative loss value at the current parameters with a fresh feature draw.
pub fn sampled_generative_loss(model: &Alternator, data: &[Tensor], seed: u64) -> Result<LossReport> {
    check_dataset(model, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<Tensor> = data
        .iter()
        .map(|x| model.generate(&mut rng, x.rows()).map(|t| t.z.expect("generate returns features")))
        .collect::<Result<_>>()?;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let nodes = generative_nodes(model, &mut tape, &vars, data, &z)?;
    Ok(nodes.report(&tape, data.len(), model.config().obs_loss_weight()))
}
