//! Layer-wise training of L-AMP-MMV with ADAM on freshly drawn batches.
//!
//! The schedule grows the unrolled depth one layer at a time: for each stage
//! t = 1..T, first only (α_t, β_t, B) move for `n_pre` epochs (earlier
//! scalars frozen), then (α_1..t, β_1..t, B) are finetuned jointly for
//! `n_post` epochs. Every optimizer step sees a brand-new batch drawn from
//! the generative model, so epochs are counted in batches, not dataset
//! passes. Each phase restarts ADAM's moment estimates from zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{lamp_backward, LampModel};
use crate::error::{Error, Result};
use crate::model::{
    generate_sparse_sample, synthesize_measurements, CsiMatrix, MeasurementMatrix, SensingMatrix,
};

/// ADAM with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e−8).
#[derive(Debug, Clone)]
pub struct AdamState {
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            steps: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            lr,
            b1: 0.9,
            b2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update in place. Entries with exactly zero gradient keep their
    /// moments at zero and their parameter untouched, which is how frozen
    /// parameters are implemented.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "ADAM state has {} entries, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.steps += 1;
        let bc1 = 1.0 - self.b1.powi(self.steps as i32);
        let bc2 = 1.0 - self.b2.powi(self.steps as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub t_layers: usize,
    /// Epochs per stage with earlier layers frozen.
    pub n_pre: usize,
    /// Joint finetuning epochs per stage.
    pub n_post: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Loss mix: (1−γ)·coefficient error + γ·measurement error.
    pub gamma: f64,
    pub lr: f64,
    /// Row sparsity of the training samples.
    pub s: usize,
    /// Measurement vectors per sample.
    pub p: usize,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_layers: 20,
            n_pre: 2,
            n_post: 5,
            batches_per_epoch: 1000,
            batch_size: 64,
            gamma: 0.5,
            lr: 1e-3,
            s: 10,
            p: 16,
            snr_db: Some(20.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_layers == 0 {
            return Err(Error::Param("t_layers must be ≥ 1".into()));
        }
        if self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Param("batch size and batches per epoch must be ≥ 1".into()));
        }
        if self.n_pre + self.n_post == 0 {
            return Err(Error::Param("need at least one pretrain or finetune epoch".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Param(format!("gamma={} outside [0, 1]", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Param(format!("learning rate {} must be positive", self.lr)));
        }
        if self.s == 0 || self.p == 0 {
            return Err(Error::Param("need s ≥ 1 and p ≥ 1".into()));
        }
        Ok(())
    }
}

/// Fully trained model plus the mean loss of every optimizer batch, in
/// order (all stages and phases concatenated).
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: LampModel,
    pub batch_losses: Vec<f64>,
}

/// One supervised pair: a sparse X, its (noisy) measurements, and both
/// rescaled by 1/‖Y‖ so every sample enters the loss at unit measurement
/// energy.
pub fn training_sample(
    f: &SensingMatrix,
    s: usize,
    p: usize,
    snr_db: Option<f64>,
    x_seed: u64,
    noise_seed: u64,
) -> Result<(CsiMatrix, MeasurementMatrix)> {
    let x = generate_sparse_sample(f.n(), p, s, x_seed)?;
    let y = synthesize_measurements(f, &x, snr_db, noise_seed)?;
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("drew a zero measurement matrix".into()));
    }
    let xs = x.entries().mapv(|z| z / norm);
    let ys = y.entries().mapv(|z| z / norm);
    Ok((
        CsiMatrix::from_entries(xs),
        MeasurementMatrix::from_entries(ys),
    ))
}

fn run_phase(
    model: &mut LampModel,
    depth: usize,
    epochs: usize,
    mask: &[bool],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    losses: &mut Vec<f64>,
    stage: usize,
    phase: &str,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let dim = model.param_count();
    let mut adam = AdamState::new(dim, config.lr);
    let mut params = model.to_params();
    for _ in 0..epochs {
        for _ in 0..config.batches_per_epoch {
            // Seeds come off the master stream serially so the run is
            // deterministic no matter how rayon schedules the batch.
            let seeds: Vec<(u64, u64)> = (0..config.batch_size)
                .map(|_| (rng.gen::<u64>(), rng.gen::<u64>()))
                .collect();
            let shared: &LampModel = model;
            let per_sample: Result<Vec<(f64, Vec<f64>)>> = seeds
                .par_iter()
                .map(|&(x_seed, noise_seed)| {
                    let (x, y) =
                        training_sample(&shared.f, config.s, config.p, config.snr_db, x_seed, noise_seed)?;
                    let (_, states) = shared.forward_partial(&y, depth)?;
                    let (loss, grads) = lamp_backward(shared, &y, &x, &states)?;
                    Ok((loss, grads.to_flat()))
                })
                .collect();
            let per_sample = per_sample?;

            let mut gsum = vec![0.0; dim];
            let mut loss_sum = 0.0;
            for (loss, grad) in &per_sample {
                loss_sum += loss;
                for (acc, &g) in gsum.iter_mut().zip(grad.iter()) {
                    *acc += g;
                }
            }
            let inv = 1.0 / config.batch_size as f64;
            let mean_loss = loss_sum * inv;
            let batch_index = losses.len();
            for (g, &keep) in gsum.iter_mut().zip(mask.iter()) {
                *g = if keep { *g * inv } else { 0.0 };
            }
            if !mean_loss.is_finite() || gsum.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    stage,
                    batch: batch_index,
                    detail: format!("{phase} produced a non-finite loss or gradient"),
                });
            }
            adam.step(&mut params, &gsum)?;
            model.set_params(&params)?;
            losses.push(mean_loss);
        }
    }
    Ok(())
}

/// Train a fresh model for `config.t_layers` layers on measurements of
/// `f`, following the per-layer pretrain/finetune schedule.
pub fn train(f: SensingMatrix, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.s > f.n() {
        return Err(Error::Param(format!(
            "sparsity {} exceeds grid size {}",
            config.s,
            f.n()
        )));
    }
    let mut model = LampModel::new(f, config.t_layers, config.gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut batch_losses = Vec::new();
    let t_total = config.t_layers;
    let dim = model.param_count();
    for stage in 1..=t_total {
        let mut pre_mask = vec![false; dim];
        pre_mask[stage - 1] = true;
        pre_mask[t_total + stage - 1] = true;
        for b in pre_mask[2 * t_total..].iter_mut() {
            *b = true;
        }
        run_phase(
            &mut model,
            stage,
            config.n_pre,
            &pre_mask,
            config,
            &mut rng,
            &mut batch_losses,
            stage,
            "pretrain",
        )?;

        let mut tune_mask = vec![false; dim];
        for t in 0..stage {
            tune_mask[t] = true;
            tune_mask[t_total + t] = true;
        }
        for b in tune_mask[2 * t_total..].iter_mut() {
            *b = true;
        }
        run_phase(
            &mut model,
            stage,
            config.n_post,
            &tune_mask,
            config,
            &mut rng,
            &mut batch_losses,
            stage,
            "finetune",
        )?;
    }
    Ok(TrainOutcome { model, batch_losses })
}
