//! Independent oracles: exhaustive DTW path enumeration and central
//! finite-difference gradient checks.

mod dtw;
mod grad;

pub use dtw::{brute_force_dtw, enumerate_paths, MAX_ENUMERATION};
pub use grad::{
    finite_diff_check, finite_diff_check_with, relative_error, GradCheckOptions, GradReport,
    GroupReport,
};
