use rand::seq::SliceRandom;

use crate::rng::{Rng, Stream};
use crate::series::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Patterns moved from the training part into validation.
    pub validation_count: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.10,
            validation_count: 50,
            seed: 0,
        }
    }
}

/// Sorted, disjoint item indices that together cover the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `total` across classes proportionally to `sizes` (largest remainder,
/// ties to the lower class index). Never gives a class more than it has.
fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut share: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Remainders compared exactly as s * total mod n.
    order.sort_by_key(|&k| std::cmp::Reverse((sizes[k] * total) % n));
    let mut left = total - share.iter().sum::<usize>();
    for &k in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if share[k] < sizes[k] {
            share[k] += 1;
            left -= 1;
        }
    }
    share
}

/// Stratified split: `round(test_fraction * N)` items go to test, then
/// `validation_count` of the rest to validation, both spread over classes in
/// proportion to their size.
pub fn split_indices(data: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "split.test_fraction = {} (must lie strictly between 0 and 1)",
            spec.test_fraction
        )));
    }
    let n = data.len();
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Invalid(format!(
            "dataset of {n} items is too small for a {} test fraction",
            spec.test_fraction
        )));
    }
    let n_rest = n - n_test;
    if spec.validation_count >= n_rest {
        return Err(Error::Invalid(format!(
            "split.validation_count = {} leaves no training data ({n_rest} items after the test split)",
            spec.validation_count
        )));
    }

    let mut rng = Rng::new(spec.seed, Stream::Split);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for (i, l) in data.labels().into_iter().enumerate() {
        by_class[l].push(i);
    }
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let test_share = apportion(&sizes, n_test);
    let rest: Vec<usize> = sizes.iter().zip(&test_share).map(|(s, t)| s - t).collect();
    let val_share = apportion(&rest, spec.validation_count);

    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (k, members) in by_class.iter().enumerate() {
        let (test, rest) = members.split_at(test_share[k]);
        let (val, train) = rest.split_at(val_share[k]);
        out.test.extend_from_slice(test);
        out.validation.extend_from_slice(val);
        out.train.extend_from_slice(train);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Moves `count` items, stratified by class, out of `data`; for datasets
/// whose test part is predefined. Returns `(rest, held_out)`.
pub fn hold_out(data: &Dataset, count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if count >= data.len() {
        return Err(Error::Invalid(format!(
            "split.validation_count = {count} leaves no training data ({} items)",
            data.len()
        )));
    }
    let mut rng = Rng::new(seed, Stream::Split);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for (i, l) in data.labels().into_iter().enumerate() {
        by_class[l].push(i);
    }
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let share = apportion(&sizes, count);
    let mut held = Vec::new();
    let mut rest = Vec::new();
    for (members, &k) in by_class.iter().zip(&share) {
        held.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    held.sort_unstable();
    rest.sort_unstable();
    Ok((data.subset(&rest)?, data.subset(&held)?))
}

/// Returns `(train, validation, test)`.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(data, spec)?;
    Ok((data.subset(&idx.train)?, data.subset(&idx.validation)?, data.subset(&idx.test)?))
}
