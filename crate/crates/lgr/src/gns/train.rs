//! Training loop: uniform sampling over all eligible (trajectory, frame)
//! pairs, mini-batch gradient averaging, Adam updates, and an optional
//! frozen validation batch.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{build_sample, compute_norm_stats, FeatureConfig, GraphSample, NormStats};
use crate::sph::ForceField;
use crate::state::Trajectory;

use super::{AdamState, GnsError, GnsModel};

/// One training source: a trajectory, its external force, and the frame
/// range (dataset split) samples may be drawn from.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub trajectory: Trajectory,
    pub force: ForceField,
    pub frames: Range<usize>,
}

impl TrainItem {
    /// An item spanning every frame of the trajectory.
    pub fn whole(trajectory: Trajectory, force: ForceField) -> Self {
        let frames = 0..trajectory.n_frames();
        TrainItem { trajectory, force, frames }
    }

    /// Sample frames `t` whose full window `t−H … t+1` lies inside the
    /// item's range (so splits never leak into each other).
    fn eligible(&self, history: usize) -> Range<usize> {
        let end = self.frames.end.min(self.trajectory.n_frames());
        (self.frames.start + history)..end.saturating_sub(1)
    }
}

/// Normalization statistics over the items' frame ranges, as used for both
/// feature construction and target scaling.
pub fn norm_stats_for(items: &[TrainItem]) -> Result<NormStats, GnsError> {
    let splits: Vec<(&Trajectory, Range<usize>)> = items
        .iter()
        .map(|it| (&it.trajectory, it.frames.start..it.frames.end.min(it.trajectory.n_frames())))
        .collect();
    Ok(compute_norm_stats(&splits)?)
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    /// Graphs per Adam update; gradients are averaged.
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate the frozen validation batch every this many steps (0 = off).
    pub val_every: usize,
    /// Size of the frozen, noise-free validation batch.
    pub val_samples: usize,
    /// Emit a log line every this many steps (0 = silent).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 5000, batch_size: 1, seed: 0, val_every: 0, val_samples: 8, log_every: 100 }
    }
}

/// Loss curves of one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainRun {
    /// Batch-mean training loss per step.
    pub losses: Vec<f64>,
    /// `(step, mean loss)` of the frozen validation batch; entry 0 is the
    /// untrained model.
    pub val: Vec<(usize, f64)>,
}

/// Runs `config.steps` Adam updates on `model` in place.
///
/// Deterministic given the seed, the items and their order: all sampling
/// and noise comes from one `ChaCha8Rng` advanced in a fixed sequence.
pub fn train_model(
    model: &mut GnsModel,
    adam: &mut AdamState,
    items: &[TrainItem],
    val_items: &[TrainItem],
    config: &TrainConfig,
) -> Result<TrainRun, GnsError> {
    let fc = *model.feature_config();
    let norm = *model.norm_stats();
    let universe = sample_universe(items, fc.history);
    if universe.is_empty() {
        return Err(GnsError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let val_batch = build_val_batch(val_items, &fc, &norm, config.val_samples)?;
    let mut run = TrainRun::default();
    if config.val_every > 0 && !val_batch.is_empty() {
        run.val.push((0, batch_loss(model, &val_batch)?));
    }

    let mut grads = vec![0.0; model.param_count()];
    for step in 0..config.steps {
        grads.fill(0.0);
        let mut loss_sum = 0.0;
        for _ in 0..config.batch_size.max(1) {
            let (item_idx, t) = universe[rng.random_range(0..universe.len())];
            let item = &items[item_idx];
            let sample = build_sample(&item.trajectory, &item.force, t, &fc, &norm, &mut rng)?;
            loss_sum += model.accumulate_gradients(&sample, &mut grads)?;
        }
        let inv = 1.0 / config.batch_size.max(1) as f64;
        for g in &mut grads {
            *g *= inv;
        }
        adam.apply(model.params_mut(), &grads);
        let loss = loss_sum * inv;
        run.losses.push(loss);

        let done = step + 1;
        if config.log_every > 0 && done % config.log_every == 0 {
            log::info!("step {done}/{}: loss {loss:.6e} lr {:.3e}", config.steps, adam.learning_rate());
        }
        if config.val_every > 0 && !val_batch.is_empty() && done % config.val_every == 0 {
            run.val.push((done, batch_loss(model, &val_batch)?));
        }
    }
    Ok(run)
}

fn sample_universe(items: &[TrainItem], history: usize) -> Vec<(usize, usize)> {
    let mut universe = Vec::new();
    for (i, item) in items.iter().enumerate() {
        for t in item.eligible(history) {
            universe.push((i, t));
        }
    }
    universe
}

/// Fixed noise-free samples, evenly spaced over the validation universe.
fn build_val_batch(
    val_items: &[TrainItem],
    fc: &FeatureConfig,
    norm: &NormStats,
    n_samples: usize,
) -> Result<Vec<GraphSample>, GnsError> {
    let universe = sample_universe(val_items, fc.history);
    if universe.is_empty() || n_samples == 0 {
        return Ok(Vec::new());
    }
    let quiet = FeatureConfig { noise_std: 0.0, ..*fc };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = n_samples.min(universe.len());
    (0..n)
        .map(|k| {
            let (item_idx, t) = universe[k * universe.len() / n];
            let item = &val_items[item_idx];
            Ok(build_sample(&item.trajectory, &item.force, t, &quiet, norm, &mut rng)?)
        })
        .collect()
}

fn batch_loss(model: &GnsModel, batch: &[GraphSample]) -> Result<f64, GnsError> {
    let mut sum = 0.0;
    for sample in batch {
        sum += model.loss(sample)?;
    }
    Ok(sum / batch.len() as f64)
}
