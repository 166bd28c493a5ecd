use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ProbeConfig;
use super::features::{PieceSequence, Window};
use super::model::{forward_cached, window_loss_and_grad, LossParts, NoteOutput, Params};
use super::tensor::Real;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam optimizer state.
pub struct Adam<T> {
    m: Params<T>,
    v: Params<T>,
    step: i32,
    lr: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &Params<T>, lr: f64) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
        }
    }

    /// One update. With `freeze_rule_embedding` the rule table is left
    /// untouched.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, freeze_rule_embedding: bool) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let (one_b1, one_b2) = (T::lit(1.0 - BETA1), T::lit(1.0 - BETA2));
        let step_size = T::lit(self.lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(ADAM_EPS);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()))
            .enumerate();
        for (i, ((p, g), (m, v))) in tensors {
            // Index 2 is the rule embedding in canonical order.
            if freeze_rule_embedding && i == 2 {
                continue;
            }
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m.data[j] = b1 * m.data[j] + one_b1 * gj;
                v.data[j] = b2 * v.data[j] + one_b2 * gj * gj;
                p.data[j] -= step_size * m.data[j] / ((v.data[j] * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean per-note total loss.
    pub mean: f64,
    pub ce: f64,
    pub bce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub windows: usize,
    pub notes: usize,
}

/// Loss and summed gradient of one mini-batch. Windows run in parallel and
/// their gradients are added in batch order, so the result does not depend
/// on thread scheduling.
pub fn batch_gradient<T: Real + Send + Sync>(
    params: &Params<T>,
    cfg: &ProbeConfig,
    batch: &[&Window],
) -> Result<(LossParts, Params<T>)> {
    let notes: usize = batch.iter().map(|w| w.num_notes()).sum();
    let scale = T::lit(1.0 / notes.max(1) as f64);
    let per_window: Vec<Result<(LossParts, Params<T>)>> = batch
        .par_iter()
        .map(|w| {
            let mut g = params.zeros_like();
            let parts = window_loss_and_grad(params, cfg, w, scale, &mut g)?;
            Ok((parts, g))
        })
        .collect();
    let mut total = LossParts::default();
    let mut grads = params.zeros_like();
    for item in per_window {
        let (parts, g) = item?;
        total.add(&parts);
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Trains a fresh model. Deterministic in `cfg.seed`.
pub fn train<T: Real + Send + Sync>(
    cfg: &ProbeConfig,
    corpus: &[PieceSequence],
) -> Result<(Params<T>, TrainReport)> {
    train_with(cfg, corpus, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<T: Real + Send + Sync>(
    cfg: &ProbeConfig,
    corpus: &[PieceSequence],
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<(Params<T>, TrainReport)> {
    cfg.validate()?;
    let windows: Vec<Window> = corpus
        .iter()
        .flat_map(|p| p.windows(cfg.context_window))
        .filter(|w| w.num_notes() > 0)
        .collect();
    if windows.is_empty() {
        return Err(Error::Empty("training corpus has no notes".into()));
    }
    if windows.iter().any(|w| w.targets.is_none()) {
        return Err(Error::Validation("training sequence without reference labels".into()));
    }
    let notes = windows.iter().map(|w| w.num_notes()).sum();

    let mut params = Params::<T>::init(cfg);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = LossParts::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &windows[i]).collect();
            let (parts, grads) = batch_gradient(&params, cfg, &batch)?;
            if !parts.total().is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: parts.total(),
                });
            }
            adam.step(&mut params, &grads, cfg.frozen_rule_embedding());
            sum.add(&parts);
        }
        let n = sum.notes as f64;
        let loss = EpochLoss {
            epoch,
            mean: sum.total() / n,
            ce: sum.ce / n,
            bce: sum.bce / n,
        };
        log::debug!("epoch {epoch}: loss {:.5}", loss.mean);
        on_epoch(&loss);
        epochs.push(loss);
    }
    Ok((
        params,
        TrainReport {
            epochs,
            windows: windows.len(),
            notes,
        },
    ))
}

/// Per-note outputs for a whole piece, window by window.
pub fn predict<T: Real + Send + Sync>(
    params: &Params<T>,
    cfg: &ProbeConfig,
    sequence: &PieceSequence,
) -> Result<Vec<NoteOutput>> {
    let windows = sequence.windows(cfg.context_window);
    let outs: Vec<Result<Vec<NoteOutput>>> = windows
        .par_iter()
        .map(|w| Ok(forward_cached(params, cfg, w)?.outputs()))
        .collect();
    let mut all = Vec::with_capacity(sequence.len());
    for o in outs {
        all.extend(o?);
    }
    Ok(all)
}
