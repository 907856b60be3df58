//! Contrastive training with Langevin-generated negatives.
//!
//! Each optimizer step draws a positive minibatch from the dataset and a
//! fresh batch of negatives: points initialized uniformly over the model's
//! joint bounds and pushed uphill on the current score for a few Langevin
//! steps. Negatives are constants for the parameter gradient.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TransitionDataset;
use crate::error::{CdrmError, Result};
use crate::langevin::{self, Direction, LangevinConfig, SampleStreams};
use crate::model::{contrastive_loss, CdrmModel};
use crate::nnet::{adam_update, AdamState, MlpNetwork, ParamGradient};

/// Langevin settings used while generating negatives. The chain moves every
/// joint coordinate within the model bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeSampler {
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: f64,
}

impl Default for NegativeSampler {
    fn default() -> Self {
        Self {
            steps: 10,
            step_size: 0.1,
            noise_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub positive_batch: usize,
    pub negative_batch: usize,
    /// Optimizer steps per epoch. `None` means one pass over the dataset.
    pub batches_per_epoch: Option<usize>,
    pub langevin: NegativeSampler,
    pub learning_rate: f64,
    /// When set, the rate follows a cosine from `learning_rate` down to this
    /// value over the whole run.
    pub final_learning_rate: Option<f64>,
    pub stability_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            positive_batch: 32,
            negative_batch: 32,
            batches_per_epoch: Some(100),
            langevin: NegativeSampler::default(),
            learning_rate: 3e-3,
            final_learning_rate: None,
            stability_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CdrmError::InvalidConfig(m.to_string()));
        if self.positive_batch == 0 || self.negative_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if self.batches_per_epoch == Some(0) {
            return bad("batches_per_epoch must be positive when set");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if let Some(f) = self.final_learning_rate {
            if !(f >= 0.0 && f <= self.learning_rate) {
                return bad("final learning rate must lie in [0, learning_rate]");
            }
        }
        if !(self.stability_eps > 0.0 && self.stability_eps < 0.5) {
            return bad("stability_eps must lie in (0, 0.5)");
        }
        let l = &self.langevin;
        if !(l.step_size > 0.0 && l.step_size.is_finite()) {
            return bad("Langevin step size must be positive");
        }
        if !(l.noise_scale >= 0.0 && l.noise_scale.is_finite()) {
            return bad("Langevin noise scale must be non-negative");
        }
        Ok(())
    }
}

/// Build an untrained model with Xavier-initialized weights whose hidden
/// layers have the given widths. Bounds come from the dataset.
pub fn init_model(dataset: &TransitionDataset, hidden: &[usize], seed: u64) -> Result<CdrmModel> {
    let dims = dataset.dims();
    let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
    layer_dims.push(dims.joint());
    layer_dims.extend_from_slice(hidden);
    layer_dims.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = MlpNetwork::xavier(&layer_dims, &mut rng)?;
    CdrmModel::new(net, dims, dataset.bounds().to_vec())
}

fn negative_config(model: &CdrmModel, n: usize, sampler: &NegativeSampler) -> LangevinConfig {
    LangevinConfig {
        n_samples: n,
        steps: sampler.steps,
        step_size: sampler.step_size,
        noise_scale: sampler.noise_scale,
        direction: Direction::Ascent,
        free_dims: (0..model.dims().joint()).collect(),
        bounds: model.input_bounds().to_vec(),
    }
}

/// Draw `n` negatives: uniform over the joint bounds, then Langevin ascent.
pub fn generate_negatives(
    model: &CdrmModel,
    n: usize,
    sampler: &NegativeSampler,
    seed: u64,
) -> Result<Array2<f64>> {
    let cfg = negative_config(model, n, sampler);
    let anchor = vec![0.0; model.dims().joint()];
    let mut streams = SampleStreams::new(seed, n);
    let init = langevin::init_uniform(&cfg, &anchor, &mut streams)?;
    langevin::evolve(model, init, &cfg, &mut streams)
}

/// Loss and its parameter gradient for one positive and one negative batch.
pub fn loss_and_grad(
    model: &CdrmModel,
    positives: &Array2<f64>,
    negatives: &Array2<f64>,
    eps: f64,
) -> Result<(f64, ParamGradient)> {
    let pos = model.forward_scored(positives.view())?;
    let neg = model.forward_scored(negatives.view())?;
    let loss = contrastive_loss(
        pos.scores.as_slice().expect("contiguous"),
        neg.scores.as_slice().expect("contiguous"),
        eps,
    )?;

    let n_pos = pos.scores.len() as f64;
    let n_neg = neg.scores.len() as f64;
    let up_pos: Array1<f64> = pos
        .scores
        .iter()
        .zip(&pos.dscore_dlogit)
        .map(|(&rho, &d)| -d / (n_pos * (rho + eps)))
        .collect();
    let up_neg: Array1<f64> = neg
        .scores
        .iter()
        .zip(&neg.dscore_dlogit)
        .map(|(&rho, &d)| d / (n_neg * (1.0 - rho + eps)))
        .collect();

    let net = model.net();
    let (_, g_pos) = net.backward(&pos.cache, up_pos.view(), true);
    let (_, g_neg) = net.backward(&neg.cache, up_neg.view(), true);
    let mut grad = g_pos.expect("requested");
    grad.add_assign(&g_neg.expect("requested"));
    Ok((loss, grad))
}

fn rows(dataset: &TransitionDataset, idx: &[usize]) -> Array2<f64> {
    let width = dataset.dims().joint();
    let mut out = Array2::zeros((idx.len(), width));
    for (mut row, &i) in out.rows_mut().into_iter().zip(idx) {
        row.assign(&ndarray::Array1::from(dataset.tuples()[i].joint()));
    }
    out
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss of every epoch.
    pub losses: Vec<f64>,
    pub steps: u64,
}

/// Train `model` in place and return the per-epoch loss trace.
pub fn train(
    model: &mut CdrmModel,
    dataset: &TransitionDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(CdrmError::InvalidInput("cannot train on an empty dataset".into()));
    }
    if dataset.dims() != model.dims() {
        return Err(CdrmError::InvalidInput(
            "dataset dims differ from the model layout".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.net());
    let mut losses = Vec::with_capacity(cfg.epochs);
    let n = dataset.len();
    let batches = cfg
        .batches_per_epoch
        .unwrap_or_else(|| n.div_ceil(cfg.positive_batch));

    let total_steps = (cfg.epochs * batches) as f64;
    let rate = |step: u64| match cfg.final_learning_rate {
        Some(end) if total_steps > 1.0 => {
            let progress = step as f64 / (total_steps - 1.0);
            end + 0.5 * (cfg.learning_rate - end) * (1.0 + (std::f64::consts::PI * progress).cos())
        }
        _ => cfg.learning_rate,
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..batches {
            let mut idx = Vec::with_capacity(cfg.positive_batch);
            while idx.len() < cfg.positive_batch {
                if cursor == n {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let positives = rows(dataset, &idx);
            let negatives =
                generate_negatives(model, cfg.negative_batch, &cfg.langevin, rng.random())
                    .map_err(|e| divergence(epoch, e))?;
            let (loss, grad) = loss_and_grad(model, &positives, &negatives, cfg.stability_eps)?;
            if !loss.is_finite() {
                return Err(CdrmError::TrainingDivergence {
                    epoch,
                    reason: format!("loss became {loss}"),
                });
            }
            let lr = rate(adam.steps_taken());
            adam_update(model.net_mut(), &grad, &mut adam, lr)
                .map_err(|e| divergence(epoch, e))?;
            epoch_loss += loss;
        }
        losses.push(epoch_loss / batches as f64);
    }
    Ok(TrainReport {
        losses,
        steps: adam.steps_taken(),
    })
}

fn divergence(epoch: usize, err: CdrmError) -> CdrmError {
    match err {
        CdrmError::TrainingDivergence { reason, .. } => CdrmError::TrainingDivergence { epoch, reason },
        CdrmError::SamplingFailure { sample } => CdrmError::TrainingDivergence {
            epoch,
            reason: format!("negative sampler produced a non-finite gradient for sample {sample}"),
        },
        other => other,
    }
}
