use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::Pair;
use super::loss::batch_loss;
use super::model::DualEncoderModel;
use crate::autodiff::{clip_gradients, Mode, OptimizerState, Tape};
use crate::error::{Error, Result};
use crate::retrieval::evaluate_testset;

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning-rate multiplier applied when validation MRR plateaus.
    pub plateau_factor: f64,
    /// Epochs without improvement tolerated before the rate is reduced.
    pub plateau_patience: usize,
    /// Epochs without improvement after which training stops.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            plateau_factor: 0.5,
            plateau_patience: 2,
            early_stop_patience: 10,
            max_epochs: 100,
            grad_clip: 10.0,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau factor must lie in (0, 1]");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("max epochs and batch size must be positive");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("gradient clip must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode batch loss over the epoch.
    pub train_loss: f64,
    pub val_mrr: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    /// Eval-mode loss over the training batches before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_mrr: f64,
    pub stopped_early: bool,
}

impl History {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.train_loss)
    }
}

/// One optimization step on a batch: forward on a train-mode tape seeded
/// with `tape_seed`, backward, global-norm clip, Adam. Returns the loss
/// before the update.
pub fn train_step(
    model: &mut DualEncoderModel,
    opt: &mut OptimizerState,
    batch: &[&Pair],
    tape_seed: u64,
    grad_clip: f64,
) -> Result<f64> {
    let code: Vec<_> = batch.iter().map(|p| &p.code).collect();
    let summary: Vec<_> = batch.iter().map(|p| &p.summary).collect();
    let mut tape = Tape::with_seed(Mode::Train, tape_seed);
    let c = model.encode_code_batch(&mut tape, &code)?;
    let s = model.encode_summary_batch(&mut tape, &summary)?;
    let l = batch_loss(&mut tape, c, s)?;
    let loss = tape.value(l).item();
    let grads = tape.backward(l)?;
    model.store.zero_grads();
    grads.accumulate_into(&mut model.store);
    clip_gradients(model.store.tensors_mut(), grad_clip);
    opt.adam_step(model.store.tensors_mut())?;
    Ok(loss)
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32) ^ batch as u64
}

fn initial_loss(model: &DualEncoderModel, train: &[Pair], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in train.chunks(batch_size) {
        let code: Vec<_> = chunk.iter().map(|p| &p.code).collect();
        let summary: Vec<_> = chunk.iter().map(|p| &p.summary).collect();
        total += model.eval_loss(&code, &summary)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Trains with seeded shuffling, a plateau schedule and early stopping on
/// validation MRR. Returns the parameters of the best validation epoch.
pub fn fit(model: DualEncoderModel, train: &[Pair], val: &[Pair], cfg: &TrainConfig) -> Result<(DualEncoderModel, History)> {
    fit_with_progress(model, train, val, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with_progress(
    mut model: DualEncoderModel,
    train: &[Pair],
    val: &[Pair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(DualEncoderModel, History)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if val.len() < 2 {
        return Err(Error::InvalidArgument("validation needs at least 2 pairs".into()));
    }
    let mut history = History {
        initial_loss: initial_loss(&model, train, cfg.batch_size).map_err(|e| diverged(0, 0, cfg.lr, e))?,
        epochs: Vec::new(),
        best_epoch: 0,
        best_mrr: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best = model.clone();
    let mut opt = OptimizerState::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (mut since_best, mut since_reduce) = (0, 0);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr = opt.lr;
        let mut total = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Pair> = idx.iter().map(|&i| &train[i]).collect();
            let loss = train_step(&mut model, &mut opt, &batch, batch_seed(cfg.seed, epoch, b), cfg.grad_clip)
                .map_err(|e| diverged(epoch, b, lr, e))?;
            total += loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let val_mrr = evaluate_testset(&model, val)
            .map_err(|e| diverged(epoch, batches, lr, e))?
            .mrr;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_mrr,
            lr,
        };
        history.epochs.push(record);
        on_epoch(&record);

        if val_mrr > history.best_mrr {
            history.best_mrr = val_mrr;
            history.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
            since_reduce = 0;
        } else {
            since_best += 1;
            since_reduce += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
            if since_reduce > cfg.plateau_patience {
                opt.lr *= cfg.plateau_factor;
                since_reduce = 0;
            }
        }
    }
    Ok((best, history))
}

fn diverged(epoch: usize, batch: usize, lr: f64, e: Error) -> Error {
    if e.is_numeric() {
        Error::Diverged {
            epoch,
            detail: format!("batch {batch}, lr {lr}: {e}"),
        }
    } else {
        e
    }
}
