//! Temporal convolutional networks whose filters are aligned to each input
//! window by constrained dynamic time warping.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`], [`series`], [`rng`]: dense containers and seeded randomness.
//! * [`align`]: asymmetric Itakura DTW between a filter and an input window.
//! * [`nn`]: convolution (aligned and linear), batch norm, dense layers and
//!   the five-layer classifier built from them.
//! * [`train`]: SGD with the progressive learning-rate schedule, metrics and
//!   checkpoints.
//! * [`data`]: dataset loaders, preprocessing, splits and a warped-pattern
//!   generator.
//! * [`verify`]: exhaustive DTW and finite-difference gradient oracles.

pub mod align;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod series;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
