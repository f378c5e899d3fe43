//! Command-line workflows over `dwa-core`: training, evaluation, oracle
//! checks, synthetic data and latency benchmarks.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_bench, cmd_dtwcheck, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, load_splits, BenchRow, Splits,
    TrainSummary, CHECKPOINT_FILE, METRICS_FILE,
};
pub use config::{parse_overrides, RunConfig, Settings, Sources};
pub use error::{CliError, CliResult, EXIT_OK, EXIT_ORACLE, EXIT_RUNTIME, EXIT_VALIDATION};
