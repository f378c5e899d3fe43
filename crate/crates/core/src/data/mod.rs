//! Dataset ingestion, preprocessing, splitting and synthetic data.

mod load;
mod preprocess;
mod split;
mod synth;

pub use load::{load_arabic, load_delimited_dir, parse_arabic, write_delimited_dir, DelimitedDataset};
pub use preprocess::{resample, resample_dataset, zscore, Standardizer};
pub use split::{hold_out, split, split_indices, SplitIndices, SplitSpec};
pub use synth::{synth_part, synth_warped, SynthSpec};
