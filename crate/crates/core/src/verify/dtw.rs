use ndarray::ArrayView2;

use crate::align::local_distance;
use crate::{Error, Result};

/// Largest `I` or `J` accepted by the exhaustive enumerator.
pub const MAX_ENUMERATION: usize = 12;

/// Every match vector from `(0,0)` to `(I-1,J-1)` whose window index moves
/// by 0, 1 or 2 per weight index, never by 0 twice in a row.
pub fn enumerate_paths(weights_len: usize, window_len: usize) -> Result<Vec<Vec<usize>>> {
    for (what, value) in [("I", weights_len), ("J", window_len)] {
        if value > MAX_ENUMERATION {
            return Err(Error::Range {
                what,
                value,
                max: MAX_ENUMERATION,
            });
        }
    }
    let mut out = Vec::new();
    if weights_len == 0 || window_len == 0 {
        return Ok(out);
    }
    let mut path = vec![0usize];
    extend(&mut path, false, weights_len, window_len, &mut out);
    Ok(out)
}

fn extend(path: &mut Vec<usize>, last_was_repeat: bool, i_len: usize, j_len: usize, out: &mut Vec<Vec<usize>>) {
    let j = *path.last().unwrap();
    if path.len() == i_len {
        if j + 1 == j_len {
            out.push(path.clone());
        }
        return;
    }
    for step in 0..=2 {
        if step == 0 && last_was_repeat {
            continue;
        }
        if j + step >= j_len {
            break;
        }
        path.push(j + step);
        extend(path, step == 0, i_len, j_len, out);
        path.pop();
    }
}

/// Exact DTW by scoring every enumerated path. Returns the minimum cost and
/// all paths that attain it.
pub fn brute_force_dtw(
    weights: ArrayView2<f64>,
    window: ArrayView2<f64>,
) -> Result<(f64, Vec<Vec<usize>>)> {
    if weights.ncols() != window.ncols() {
        return Err(Error::Shape {
            op: "brute_force_dtw",
            left: weights.shape().to_vec(),
            right: window.shape().to_vec(),
        });
    }
    let paths = enumerate_paths(weights.nrows(), window.nrows())?;
    if paths.is_empty() {
        return Err(Error::Infeasible {
            weights: weights.nrows(),
            window: window.nrows(),
        });
    }
    let w = weights.as_standard_layout();
    let a = window.as_standard_layout();
    let costs: Vec<f64> = paths
        .iter()
        .map(|p| {
            let mut sum = 0.0;
            for (i, &j) in p.iter().enumerate() {
                sum += local_distance(w.row(i).to_slice().unwrap(), a.row(j).to_slice().unwrap());
            }
            sum
        })
        .collect();
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let argmins = paths
        .into_iter()
        .zip(costs)
        .filter(|(_, c)| *c == best)
        .map(|(p, _)| p)
        .collect();
    Ok((best, argmins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align, validate_matches};
    use crate::rng::Rng;
    use ndarray::{array, Array2};
    use rand::Rng as _;

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_paths(1, 1).unwrap(), vec![vec![0]]);
        let mut three = enumerate_paths(3, 3).unwrap();
        three.sort();
        assert_eq!(three, vec![vec![0, 0, 2], vec![0, 1, 2], vec![0, 2, 2]]);
        assert!(enumerate_paths(2, 4).unwrap().is_empty());
        assert!(matches!(enumerate_paths(13, 3), Err(Error::Range { .. })));
    }

    #[test]
    fn enumerated_paths_are_valid_and_distinct() {
        for i in 1..=7 {
            for j in 1..=9 {
                let paths = enumerate_paths(i, j).unwrap();
                let mut sorted = paths.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), paths.len());
                for p in &paths {
                    validate_matches(p, j).unwrap();
                }
                assert_eq!(paths.is_empty(), !crate::align::feasible(i, j), "I={i} J={j}");
            }
        }
    }

    #[test]
    fn known_minimum() {
        let w = array![[0.0], [1.0], [0.0]];
        let a = array![[0.0], [0.0], [1.0]];
        let (cost, argmins) = brute_force_dtw(w.view(), a.view()).unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(argmins, vec![vec![0, 2, 2]]);

        let (cost, argmins) = brute_force_dtw(w.view(), w.view()).unwrap();
        assert_eq!(cost, 0.0);
        assert!(argmins.contains(&vec![0, 1, 2]));
    }

    #[test]
    fn dp_matches_enumeration_on_random_rectangles() {
        let mut rng = Rng::aux(11, 0);
        for _ in 0..400 {
            let i = rng.random_range(1..=8);
            let j = rng.random_range(1..=10);
            if !crate::align::feasible(i, j) {
                continue;
            }
            let d = rng.random_range(1..=3);
            let w = Array2::from_shape_fn((i, d), |_| rng.random_range(-1.0..1.0));
            let a = Array2::from_shape_fn((j, d), |_| rng.random_range(-1.0..1.0));
            let (cost, argmins) = brute_force_dtw(w.view(), a.view()).unwrap();
            let path = align(w.view(), a.view()).unwrap();
            assert_eq!(path.cost(), cost);
            assert!(argmins.iter().any(|p| p == path.matches()));
        }
    }

    #[test]
    fn dp_matches_enumeration_on_small_integer_grids() {
        // Integer-valued inputs produce many exact ties.
        let mut rng = Rng::aux(12, 0);
        for _ in 0..400 {
            let i = rng.random_range(2..=7);
            let j = rng.random_range(1..=9);
            if !crate::align::feasible(i, j) {
                continue;
            }
            let w = Array2::from_shape_fn((i, 1), |_| rng.random_range(0..3) as f64);
            let a = Array2::from_shape_fn((j, 1), |_| rng.random_range(0..3) as f64);
            let (cost, argmins) = brute_force_dtw(w.view(), a.view()).unwrap();
            let path = align(w.view(), a.view()).unwrap();
            assert_eq!(path.cost(), cost);
            assert!(argmins.iter().any(|p| p == path.matches()));
        }
    }
}
