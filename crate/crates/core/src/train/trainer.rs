use std::time::Instant;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::nn::{ConvMode, ModelGeometry, ModelState, PassOptions};
use crate::rng::{Rng, RngState, Stream};
use crate::series::Dataset;
use crate::{Error, Result};

use super::eval::evaluate;
use super::metrics::{MetricsLog, MetricsRow};
use super::sgd::sgd_step;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial conv learning rate.
    pub lr_conv: f64,
    /// Conv rate decay: `lr_conv / (1 + lr_decay * t)`.
    pub lr_decay: f64,
    /// Static rate for batch-norm and dense parameters.
    pub lr_dense: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub geometry: ModelGeometry,
    /// Spread per-sample work over the rayon pool. Results are identical either way.
    pub parallel: bool,
    /// Record wall-clock seconds in the metrics (makes metrics files differ between runs).
    pub record_time: bool,
    /// Score the last metrics row with parameters rounded to `f32`, i.e. the
    /// model a checkpoint of this run restores.
    pub final_eval_f32: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_conv: 0.001,
            lr_decay: 0.001,
            lr_dense: 0.0001,
            batch_size: 20,
            iterations: 5000,
            eval_every: 500,
            seed: 0,
            geometry: ModelGeometry::standard(50, 2, 8, 2, 4, ConvMode::Dwa),
            parallel: false,
            record_time: false,
            final_eval_f32: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.lr_conv > 0.0 && self.lr_conv.is_finite(), "lr_conv must be positive"),
            (self.lr_decay >= 0.0 && self.lr_decay.is_finite(), "lr_decay must be non-negative"),
            (self.lr_dense > 0.0 && self.lr_dense.is_finite(), "lr_dense must be positive"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.iterations >= 1, "iterations must be at least 1"),
            (self.eval_every >= 1, "eval_every must be at least 1"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::Invalid(format!("train config: {msg}")));
        }
        self.geometry.shape_chain()?;
        Ok(())
    }
}

/// Epoch-wise shuffling without replacement; batches run across epoch
/// boundaries.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        Self::from_rng(len, Rng::new(seed, Stream::Shuffle))
    }

    pub fn from_rng(len: usize, mut rng: Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub log: MetricsLog,
    /// Shuffle generator position after the last batch.
    pub rng: RngState,
    pub iterations: usize,
}

fn check_split(name: &str, data: &Dataset, g: &ModelGeometry) -> Result<()> {
    if data.fixed_length() != Some(g.input_len) || data.feature_dim() != g.input_dim {
        return Err(Error::Invalid(format!(
            "{name} set: items must be {} x {} (found length {:?}, dim {})",
            g.input_len,
            g.input_dim,
            data.fixed_length(),
            data.feature_dim()
        )));
    }
    if data.num_classes() > g.classes {
        return Err(Error::Invalid(format!(
            "{name} set has {} classes, model has {}",
            data.num_classes(),
            g.classes
        )));
    }
    Ok(())
}

/// Trains a freshly initialised model for `config.iterations` batches.
///
/// Every `eval_every` iterations (and after the last) a [`MetricsRow`] is
/// logged and handed to `on_row`, e.g. to append it to a file.
pub fn train_loop(
    config: &TrainConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    test: &Dataset,
    mut on_row: impl FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let g = &config.geometry;
    check_split("training", train, g)?;
    train.check_all_classes()?;
    if let Some(v) = val {
        check_split("validation", v, g)?;
    }
    check_split("test", test, g)?;

    let mut model = ModelState::init(g.clone(), config.seed)?;
    let mut sampler = BatchSampler::new(train.len(), config.seed);
    let mut log = MetricsLog::default();
    let started = Instant::now();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let opts = PassOptions::train().parallel(config.parallel);

    for t in 0..config.iterations {
        let indices = sampler.next_batch(config.batch_size);
        let views: Vec<ArrayView2<f64>> = indices.iter().map(|&i| train.items()[i].values()).collect();
        let labels: Vec<usize> = indices.iter().map(|&i| train.items()[i].label().unwrap_or(0)).collect();

        let trace = model.forward(&views, opts)?;
        let (loss, grads) = model.backward(&trace, &labels)?;
        if !loss.loss.is_finite() {
            return Err(Error::Diverged {
                layer: "loss".into(),
                iteration: t,
            });
        }
        model.update_running_stats(&trace);
        sgd_step(&mut model, &grads, t, config)?;
        loss_sum += loss.loss;
        loss_count += 1;

        let done = t + 1;
        if done % config.eval_every == 0 || done == config.iterations {
            let stored;
            let scored = if done == config.iterations && config.final_eval_f32 {
                let mut m = model.clone();
                m.round_to_f32();
                stored = m;
                &stored
            } else {
                &model
            };
            let val_acc = match val {
                Some(v) => Some(evaluate(scored, v, config.parallel)?.accuracy),
                None => None,
            };
            let row = MetricsRow {
                iteration: done,
                train_loss: loss_sum / loss_count as f64,
                val_acc,
                test_acc: evaluate(scored, test, config.parallel)?.accuracy,
                seconds: config.record_time.then(|| started.elapsed().as_secs_f64()),
            };
            on_row(&row)?;
            log.push(row)?;
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        rng: sampler.rng_state(),
        iterations: config.iterations,
    })
}
