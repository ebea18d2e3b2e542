use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::config::EstimatorConfig;
use super::EstimatorError;
use crate::{seeded_rng, SeededRng};

/// A model trained by minibatch Adam.
pub(crate) trait Trainable: Clone {
    /// One optimizer step on `batch`; returns the batch loss.
    fn train_batch(&mut self, batch: &Array2<f64>, epoch: usize, rng: &mut SeededRng) -> Result<f64, EstimatorError>;

    /// Deterministic loss on held-out rows.
    fn validation_loss(&self, val: &Array2<f64>) -> Result<f64, EstimatorError>;

    /// Early stopping may not fire before this many epochs have run.
    fn min_epochs(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Runs up to `cfg.epochs` epochs with early stopping on validation loss and
/// restores the best validation snapshot. An empty `val` disables early stopping.
pub(crate) fn train<M: Trainable>(
    model: &mut M,
    train: &Array2<f64>,
    val: &Array2<f64>,
    cfg: &EstimatorConfig,
) -> Result<TrainSummary, EstimatorError> {
    if train.nrows() == 0 {
        return Err(EstimatorError::Fit("training set is empty".into()));
    }
    let mut rng = seeded_rng(cfg.seed ^ 0x7261_696e_6c6f_6f70);
    let mut order: Vec<usize> = (0..train.nrows()).collect();
    let mut summary = TrainSummary { epochs_run: 0, train_loss: Vec::new(), val_loss: Vec::new(), best_epoch: None };
    let mut best: Option<(f64, M)> = None;
    let mut waited = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        let bs = cfg.batch_size.max(1);
        for chunk in order.chunks(bs) {
            // A single trailing row cannot be batch-normalized.
            if chunk.len() < 2 && seen > 0 {
                continue;
            }
            let batch = train.select(Axis(0), chunk);
            let loss = model.train_batch(&batch, epoch, &mut rng)?;
            if !loss.is_finite() {
                return Err(EstimatorError::NonFinite { epoch, what: "training loss".into() });
            }
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        summary.train_loss.push(total / seen as f64);
        summary.epochs_run = epoch + 1;

        if val.nrows() > 0 {
            let v = model.validation_loss(val)?;
            if !v.is_finite() {
                return Err(EstimatorError::NonFinite { epoch, what: "validation loss".into() });
            }
            summary.val_loss.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.clone()));
                summary.best_epoch = Some(epoch);
                waited = 0;
            } else {
                waited += 1;
                if waited >= cfg.patience && epoch + 1 >= model.min_epochs() {
                    break;
                }
            }
        }
    }
    if let Some((_, snapshot)) = best {
        *model = snapshot;
    }
    Ok(summary)
}
