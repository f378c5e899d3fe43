//! SGD training, evaluation, metrics and checkpoints.

mod checkpoint;
mod eval;
mod metrics;
mod sgd;
mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use eval::{evaluate, predict, Evaluation};
pub use metrics::{MetricsLog, MetricsRow, MetricsWriter};
pub use sgd::{lr_schedule, sgd_step};
pub use trainer::{train_loop, BatchSampler, TrainConfig, TrainOutcome};
