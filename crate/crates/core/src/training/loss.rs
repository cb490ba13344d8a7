//! Monte Carlo cross-entropy losses.
//!
//! Both losses have the form
//! `(1/B) Σ_b Σ_t [ ‖z_t − μ_z‖² + w · ‖x_t − μ_x‖² ]` with
//! `w = D_z σ_z² / (D_x σ_x²)`, `μ_x = √(1−σ_x²) f_θ(z_{t−1})` and
//! `μ_z = √α_t g_φ(x_t) + √(1−α_t−σ_z²) z_{t−1}` evaluated at the data `x_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alternator, ModelVars};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    /// `feature_term + obs_weight · observation_term`.
    pub total: f64,
    pub feature_term: f64,
    /// Unweighted squared observation residual.
    pub observation_term: f64,
    pub obs_weight: f64,
}

impl LossReport {
    pub(crate) fn from_terms(epoch: usize, feature_term: f64, observation_term: f64, obs_weight: f64) -> Self {
        Self {
            epoch,
            total: feature_term + obs_weight * observation_term,
            feature_term,
            observation_term,
            obs_weight,
        }
    }
}

/// Scalar loss node plus the two summed (not yet batch-averaged) terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LossNodes {
    pub loss: Var,
    pub feature: Var,
    pub observation: Var,
}

impl LossNodes {
    pub fn report(&self, tape: &Tape, batch: usize, obs_weight: f64) -> LossReport {
        let b = batch as f64;
        LossReport::from_terms(0, tape.scalar(self.feature) / b, tape.scalar(self.observation) / b, obs_weight)
    }
}

pub(crate) fn check_pairs(x: &[Tensor], z: &[Tensor], model: &Alternator) -> Result<usize> {
    let first = x.first().ok_or_else(|| Error::contract("loss needs a non-empty batch"))?;
    if x.len() != z.len() {
        return Err(Error::dim("loss batch", &[x.len()], &[z.len()]));
    }
    let steps = first.rows();
    if steps == 0 {
        return Err(Error::contract("sequences must have at least one step"));
    }
    let cfg = model.config();
    for (xb, zb) in x.iter().zip(z) {
        if xb.shape() != [steps, cfg.obs_dim] {
            return Err(Error::dim("loss x", &[steps, cfg.obs_dim], xb.shape()));
        }
        if zb.shape() != [steps + 1, cfg.feat_dim] {
            return Err(Error::dim("loss z", &[steps + 1, cfg.feat_dim], zb.shape()));
        }
    }
    Ok(steps)
}

/// Gathers row `t` of every sequence into a `B × D` matrix.
pub(crate) fn step_rows(seqs: &[&Tensor], t: usize) -> Tensor {
    let cols = seqs[0].cols();
    let mut data = Vec::with_capacity(seqs.len() * cols);
    for s in seqs {
        data.extend_from_slice(s.row(t));
    }
    Tensor::new(vec![seqs.len(), cols], data).expect("step rows")
}

/// Residual sums for one step with features on the tape.
pub(crate) fn step_terms(
    model: &Alternator,
    tape: &mut Tape,
    vars: &ModelVars,
    x_data: Var,
    z_prev: Var,
    z_next: Var,
    alphas: &[f64],
) -> Result<(Var, Var)> {
    let mu_x = model.obs_mean_tape(tape, vars, z_prev)?;
    let mu_z = model.latent_mean_tape(tape, vars, x_data, z_prev, alphas)?;
    let rz = tape.sub(z_next, mu_z)?;
    let rx = tape.sub(x_data, mu_x)?;
    Ok((tape.sum_squares(rz)?, tape.sum_squares(rx)?))
}

pub(crate) fn combine(
    tape: &mut Tape,
    feature: Var,
    observation: Var,
    batch: usize,
    obs_weight: f64,
) -> Result<LossNodes> {
    let weighted = tape.scale(observation, obs_weight)?;
    let sum = tape.add(feature, weighted)?;
    let loss = tape.scale(sum, 1.0 / batch as f64)?;
    Ok(LossNodes {
        loss,
        feature,
        observation,
    })
}

/// Records the generative loss for given features `z^{(b)}_{0:T}`, stepping
/// through time with one `B`-row matrix per step.
pub(crate) fn generative_nodes(
    model: &Alternator,
    tape: &mut Tape,
    vars: &ModelVars,
    x: &[Tensor],
    z: &[Tensor],
) -> Result<LossNodes> {
    let steps = check_pairs(x, z, model)?;
    let xs: Vec<&Tensor> = x.iter().collect();
    let zs: Vec<&Tensor> = z.iter().collect();
    let b = x.len();
    let mut z_prev = tape.constant(step_rows(&zs, 0));
    let mut feature = None;
    let mut observation = None;
    for t in 0..steps {
        let xd = tape.constant(step_rows(&xs, t));
        let zn = tape.constant(step_rows(&zs, t + 1));
        let alphas = vec![model.config().alpha_at(t + 1); b];
        let (f, o) = step_terms(model, tape, vars, xd, z_prev, zn, &alphas)?;
        feature = Some(match feature {
            None => f,
            Some(acc) => tape.add(acc, f)?,
        });
        observation = Some(match observation {
            None => o,
            Some(acc) => tape.add(acc, o)?,
        });
        z_prev = zn;
    }
    combine(
        tape,
        feature.expect("at least one step"),
        observation.expect("at least one step"),
        b,
        model.config().obs_loss_weight(),
    )
}

/// Records the teacher-forced loss with every `(b, t)` pair stacked into one
/// matrix, so each network runs once per batch.
pub(crate) fn seq2seq_nodes(
    model: &Alternator,
    tape: &mut Tape,
    vars: &ModelVars,
    x: &[Tensor],
    y: &[Tensor],
) -> Result<LossNodes> {
    let steps = check_pairs(x, y, model)?;
    let (dx, dz) = (model.config().obs_dim, model.config().feat_dim);
    let rows = x.len() * steps;
    let mut x_all = Vec::with_capacity(rows * dx);
    let mut y_prev = Vec::with_capacity(rows * dz);
    let mut y_next = Vec::with_capacity(rows * dz);
    let mut alphas = Vec::with_capacity(rows);
    for (xb, yb) in x.iter().zip(y) {
        x_all.extend_from_slice(xb.data());
        y_prev.extend_from_slice(&yb.data()[..steps * dz]);
        y_next.extend_from_slice(&yb.data()[dz..]);
        alphas.extend((1..=steps).map(|t| model.config().alpha_at(t)));
    }
    let xd = tape.constant(Tensor::new(vec![rows, dx], x_all)?);
    let yp = tape.constant(Tensor::new(vec![rows, dz], y_prev)?);
    let yn = tape.constant(Tensor::new(vec![rows, dz], y_next)?);
    let (f, o) = step_terms(model, tape, vars, xd, yp, yn, &alphas)?;
    combine(tape, f, o, x.len(), model.config().obs_loss_weight())
}

/// Generative loss value for data `x^{(b)}_{1:T}` paired by index with
/// sampled features `z^{(b)}_{0:T}`.
pub fn loss_generative(model: &Alternator, x: &[Tensor], z: &[Tensor]) -> Result<LossReport> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let nodes = generative_nodes(model, &mut tape, &vars, x, z)?;
    Ok(nodes.report(&tape, x.len(), model.config().obs_loss_weight()))
}

/// Sequence-to-sequence loss value. Each `y^{(b)}` holds `y_0..y_T`, with
/// `y_0` the prior draw used during training.
pub fn loss_seq2seq(model: &Alternator, x: &[Tensor], y: &[Tensor]) -> Result<LossReport> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let nodes = seq2seq_nodes(model, &mut tape, &vars, x, y)?;
    Ok(nodes.report(&tape, x.len(), model.config().obs_loss_weight()))
}

/// Loss value plus gradients for every parameter, in the order of
/// [`ModelParams::tensors_mut`](crate::model::ModelParams::tensors_mut).
pub fn loss_generative_grad(model: &Alternator, x: &[Tensor], z: &[Tensor]) -> Result<(LossReport, Vec<Tensor>)> {
    gradients(model, |m, tape, vars| generative_nodes(m, tape, vars, x, z), x.len())
}

/// [`loss_seq2seq`] with parameter gradients, ordered as in [`loss_generative_grad`].
pub fn loss_seq2seq_grad(model: &Alternator, x: &[Tensor], y: &[Tensor]) -> Result<(LossReport, Vec<Tensor>)> {
    gradients(model, |m, tape, vars| seq2seq_nodes(m, tape, vars, x, y), x.len())
}

fn gradients<F>(model: &Alternator, build: F, batch: usize) -> Result<(LossReport, Vec<Tensor>)>
where
    F: FnOnce(&Alternator, &mut Tape, &ModelVars) -> Result<LossNodes>,
{
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let nodes = build(model, &mut tape, &vars)?;
    let report = nodes.report(&tape, batch, model.config().obs_loss_weight());
    let mut grads = tape.backward(nodes.loss)?;
    let mut g = model.params().otn.collect_grads(&mut grads, &vars.otn);
    g.extend(model.params().ftn.collect_grads(&mut grads, &vars.ftn));
    Ok((report, g))
}
