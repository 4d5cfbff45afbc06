use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Dataset, Optimizer, TrainConfig, TrainError};
use crate::model::{argmax_rows, ModelGraph};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-batch losses, each weighted by its batch size.
    pub loss: f64,
    /// Fraction of training samples classified correctly while the epoch ran.
    pub accuracy: f64,
}

fn first_non_finite(model: &ModelGraph, grads: &[Tensor]) -> Option<(String, usize, f64)> {
    model.params().into_iter().zip(grads).find_map(|((name, _), g)| {
        g.data()
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (name, i, g.data()[i]))
    })
}

/// One pass over `data` in seeded random order; the last partial batch is
/// kept. Parameters are rounded to single precision after every update.
pub fn train_epoch(
    model: &mut ModelGraph,
    optimizer: &mut Optimizer,
    data: &Dataset,
    batch_size: usize,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Data("empty training set".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for (b, chunk) in order.chunks(batch_size.max(1)).enumerate() {
        let (x, labels) = data.batch(chunk);
        let (loss, grads, probs) = model.loss_and_grads(&x, &labels)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: b });
        }
        correct += argmax_rows(&probs)
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        let at = |source: TrainError| TrainError::Batch {
            epoch,
            batch: b,
            source: Box::new(source),
        };
        if let Some((name, element, value)) = first_non_finite(model, &grads) {
            return Err(at(TrainError::NonFiniteGradient {
                param: name,
                element,
                value,
            }));
        }
        optimizer.step(model.params_mut(), &grads).map_err(at)?;
        model.round_params_to_f32();
        loss_sum += loss * chunk.len() as f64;
    }
    Ok(EpochStats {
        epoch,
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Trains for `cfg.epochs` epochs with a shuffle stream seeded by `seed`.
pub fn fit(model: &mut ModelGraph, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Vec<EpochStats>, TrainError> {
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=cfg.epochs)
        .map(|e| train_epoch(model, &mut optimizer, data, cfg.batch_size, e, &mut rng))
        .collect()
}

/// Predicted class for every segment, in dataset order.
pub fn predict_dataset(model: &ModelGraph, data: &Dataset, batch_size: usize) -> Result<Vec<usize>, TrainError> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let per_batch: Vec<Vec<usize>> = indices
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let (x, _) = data.batch(chunk);
            model.predict(&x).map_err(TrainError::from)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_batch.into_iter().flatten().collect())
}

/// Fraction of segments whose predicted class matches the label.
pub fn accuracy(model: &ModelGraph, data: &Dataset, batch_size: usize) -> Result<f64, TrainError> {
    let preds = predict_dataset(model, data, batch_size)?;
    let hits = preds.iter().zip(data.labels()).filter(|(p, l)| **p == *l).count();
    Ok(hits as f64 / data.len().max(1) as f64)
}
