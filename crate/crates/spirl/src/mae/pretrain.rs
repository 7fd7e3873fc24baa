use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dataset_stats, random_mask, Frame, MaeConfig, MaeModel};
use crate::tensor::{AdamW, Result, Tape, TensorError, WarmupCosine};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSchedule {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    /// Peak lr = base_lr * batch_size / 256.
    pub base_lr: f64,
    pub weight_decay: f64,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        PretrainSchedule { epochs: 50, warmup_epochs: 5, batch_size: 64, base_lr: 0.001, weight_decay: 0.05 }
    }
}

impl PretrainSchedule {
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }
}

/// Pre-train an MAE on raw rgb8 frames. Deterministic given `seed`; aborts on
/// a non-finite loss. `on_epoch` receives `(epoch, mean_loss, model)` after
/// every epoch (checkpointing hook).
pub fn pretrain(
    config: MaeConfig,
    frames: &[Vec<u8>],
    schedule: PretrainSchedule,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &MaeModel) -> Result<()>,
) -> Result<(MaeModel, Vec<f64>)> {
    assert!(!frames.is_empty(), "pre-training dataset is empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MaeModel::init(config, &mut rng)?;
    model.stats = dataset_stats(config.frame, frames);

    let steps_per_epoch = frames.len().div_ceil(schedule.batch_size);
    // short runs clamp the warmup to the run length
    let lr = WarmupCosine::new(
        schedule.peak_lr(),
        schedule.warmup_epochs.min(schedule.epochs) * steps_per_epoch,
        schedule.epochs * steps_per_epoch,
    );
    let mut opt = AdamW::new(lr.lr_at(0), 0.9, 0.95, schedule.weight_decay);

    let n_patches = config.frame.num_patches();
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut curve = Vec::with_capacity(schedule.epochs);
    let mut step = 0usize;
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(schedule.batch_size) {
            model.store.zero_grads();
            let mut batch_loss = 0.0;
            for &fi in batch {
                let frame = Frame::from_rgb8(config.frame, &frames[fi]);
                let (visible, masked) = random_mask(n_patches, config.mask_ratio, &mut rng);
                let mut tape = Tape::new();
                let pred = model.forward(&mut tape, &frame, &visible)?;
                let loss = model.loss(&mut tape, &frame, pred, &masked)?;
                let scaled = tape.scale(loss, 1.0 / batch.len() as f64);
                let lv = tape.value(loss);
                if !lv.is_finite() {
                    return Err(TensorError::NonFinite(format!(
                        "mae loss at epoch {epoch}, frame {fi}: {lv}"
                    )));
                }
                batch_loss += lv / batch.len() as f64;
                tape.backward(scaled)?;
                tape.grads_into(&mut model.store);
            }
            opt.lr = lr.lr_at(step);
            opt.step(&mut model.store);
            step += 1;
            epoch_loss += batch_loss;
            epoch_batches += 1;
        }
        let mean_loss = epoch_loss / epoch_batches as f64;
        curve.push(mean_loss);
        on_epoch(epoch, mean_loss, &model)?;
    }
    Ok((model, curve))
}
