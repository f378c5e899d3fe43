//! Asymmetric Itakura DTW between a filter (weights) and an input window.
//!
//! Every weight index `i = 0..I` is matched to exactly one window row `j(i)`.
//! The path starts at `(0, 0)`, ends at `(I-1, J-1)`, and the window index
//! advances by 0, 1 or 2 per weight step with no two consecutive 0-steps.
//! The local distance is the Euclidean norm of the row difference.
//!
//! The DP keeps two values per cell, one for arriving by a 0-step and one
//! for arriving by a 1- or 2-step. A single "reached by repeat" bit per cell
//! is not enough: the best value of a cell may use a repeat while a slightly
//! worse non-repeat arrival is what the optimal path needs.
//!
//! Ties prefer the diagonal step, then the skip, then the repeat, so equal
//! costs fall back to linear alignment.
//!
//! Indices in this module are 0-based.

use ndarray::{ArrayView2, CowArray, Ix2};

use crate::linalg::squared_distance;
use crate::{Error, Result};

/// The match set of one filter application: `matches()[i]` is the window
/// row aligned with weight row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    matches: Vec<usize>,
    cost: f64,
}

impl AlignmentPath {
    /// Build from raw matches; checks the structural invariants for a window of `window_len` rows.
    pub fn from_matches(matches: Vec<usize>, window_len: usize, cost: f64) -> Result<Self> {
        validate_matches(&matches, window_len)?;
        Ok(AlignmentPath { matches, cost })
    }

    /// One-to-one alignment of `len` weights to `len` window rows.
    pub fn diagonal(len: usize, cost: f64) -> Self {
        AlignmentPath {
            matches: (0..len).collect(),
            cost,
        }
    }

    pub fn matches(&self) -> &[usize] {
        &self.matches
    }

    /// `(weight index, window index)` pairs in path order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matches.iter().copied().enumerate()
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.matches.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Checks the Itakura path invariants on a match vector.
pub fn validate_matches(matches: &[usize], window_len: usize) -> Result<()> {
    let bad = |why: String| Err(Error::Contract(format!("alignment path {matches:?}: {why}")));
    match (matches.first(), matches.last()) {
        (Some(0), Some(&last)) if last + 1 == window_len => {}
        (None, _) => return bad("empty".into()),
        _ => return bad(format!("must run from row 0 to row {}", window_len.saturating_sub(1))),
    }
    let mut prev_step = None;
    for w in matches.windows(2) {
        if w[1] < w[0] || w[1] - w[0] > 2 {
            return bad(format!("step {} -> {} outside {{0,1,2}}", w[0], w[1]));
        }
        let step = w[1] - w[0];
        if step == 0 && prev_step == Some(0) {
            return bad("two consecutive repeats".into());
        }
        prev_step = Some(step);
    }
    Ok(())
}

/// Whether some path links `(0,0)` to `(weights_len-1, window_len-1)`.
///
/// `I - 1` steps reach at most `2(I - 1)` rows further and, alternating
/// repeats with unit steps, at least `floor((I - 1) / 2)`.
pub fn feasible(weights_len: usize, window_len: usize) -> bool {
    if weights_len == 0 || window_len == 0 {
        return false;
    }
    let steps = weights_len - 1;
    let span = window_len - 1;
    span >= steps / 2 && span <= 2 * steps
}

/// Euclidean distance between two feature vectors.
#[inline]
pub fn local_distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Minimum-cost Itakura alignment of `weights` (I x D) to `window` (J x D).
pub fn align(weights: ArrayView2<f64>, window: ArrayView2<f64>) -> Result<AlignmentPath> {
    let (w, a) = checked_pair(weights, window)?;
    let (i_len, j_len) = (w.nrows(), a.nrows());
    let mut aligner = Aligner::default();
    let mut matches = vec![0; i_len];
    let cost = aligner.align_by(i_len, j_len, |i, j| dist_rows(&w, &a, i, j), &mut matches);
    Ok(AlignmentPath { matches, cost })
}

/// The cost of [`align`] without recovering the path.
pub fn dtw_distance(weights: ArrayView2<f64>, window: ArrayView2<f64>) -> Result<f64> {
    let (w, a) = checked_pair(weights, window)?;
    let mut aligner = Aligner::default();
    Ok(aligner.fill(w.nrows(), a.nrows(), |i, j| dist_rows(&w, &a, i, j)))
}

fn dist_rows(w: &CowArray<f64, Ix2>, a: &CowArray<f64, Ix2>, i: usize, j: usize) -> f64 {
    // Both operands are in standard layout (see `checked_pair`).
    local_distance(
        w.row(i).to_slice().expect("standard layout"),
        a.row(j).to_slice().expect("standard layout"),
    )
}

type PairViews<'a> = (CowArray<'a, f64, Ix2>, CowArray<'a, f64, Ix2>);

fn checked_pair<'a>(
    weights: ArrayView2<'a, f64>,
    window: ArrayView2<'a, f64>,
) -> Result<PairViews<'a>> {
    if weights.ncols() != window.ncols() {
        return Err(Error::Shape {
            op: "align",
            left: weights.shape().to_vec(),
            right: window.shape().to_vec(),
        });
    }
    if !feasible(weights.nrows(), window.nrows()) {
        return Err(Error::Infeasible {
            weights: weights.nrows(),
            window: window.nrows(),
        });
    }
    if weights.iter().chain(window.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("alignment input".into()));
    }
    Ok((standard(weights), standard(window)))
}

fn standard(view: ArrayView2<'_, f64>) -> CowArray<'_, f64, Ix2> {
    if view.is_standard_layout() {
        CowArray::from(view)
    } else {
        CowArray::from(view.as_standard_layout().into_owned())
    }
}

const FROM_SKIP: u8 = 1;
const FROM_REPEAT_STATE: u8 = 2;

/// Reusable DP buffers.
#[derive(Debug, Default, Clone)]
pub struct Aligner {
    // Best cost of reaching a cell by a 1- or 2-step (or the start cell).
    advance: Vec<f64>,
    // Best cost of reaching a cell by a 0-step.
    repeat: Vec<f64>,
    // For `advance`: which step was taken and which state it left.
    back: Vec<u8>,
    cols: usize,
}

impl Aligner {
    /// Runs the DP over the `i_len x j_len` grid with `cost(i, j)` as local
    /// distance, writes the optimal matches and returns the path cost.
    ///
    /// The caller guarantees `feasible(i_len, j_len)` and
    /// `matches.len() == i_len`.
    pub fn align_by<F>(&mut self, i_len: usize, j_len: usize, cost: F, matches: &mut [usize]) -> f64
    where
        F: FnMut(usize, usize) -> f64,
    {
        debug_assert_eq!(matches.len(), i_len);
        let total = self.fill(i_len, j_len, cost);
        self.backtrack(i_len, j_len, matches);
        total
    }

    /// Forward pass only; returns the optimal cost.
    pub fn fill<F>(&mut self, i_len: usize, j_len: usize, mut cost: F) -> f64
    where
        F: FnMut(usize, usize) -> f64,
    {
        debug_assert!(feasible(i_len, j_len));
        let cells = i_len * j_len;
        self.cols = j_len;
        self.advance.clear();
        self.advance.resize(cells, f64::INFINITY);
        self.repeat.clear();
        self.repeat.resize(cells, f64::INFINITY);
        self.back.clear();
        self.back.resize(cells, 0);

        self.advance[0] = cost(0, 0);
        for i in 1..i_len {
            let remaining = i_len - 1 - i;
            let lo = (i / 2).max((j_len - 1).saturating_sub(2 * remaining));
            let hi = (2 * i).min(j_len - 1 - remaining / 2);
            let row = i * j_len;
            let prev = row - j_len;
            for j in lo..=hi {
                let d = cost(i, j);
                self.repeat[row + j] = self.advance[prev + j] + d;

                let mut best = f64::INFINITY;
                let mut how = 0u8;
                if j >= 1 {
                    let (v, state) = self.best_at(prev + j - 1);
                    best = v;
                    how = state;
                }
                if j >= 2 {
                    let (v, state) = self.best_at(prev + j - 2);
                    if v < best {
                        best = v;
                        how = FROM_SKIP | state;
                    }
                }
                self.advance[row + j] = best + d;
                self.back[row + j] = how;
            }
        }
        let end = cells - 1;
        self.best_at(end).0
    }

    #[inline]
    fn best_at(&self, cell: usize) -> (f64, u8) {
        let (adv, rep) = (self.advance[cell], self.repeat[cell]);
        if adv <= rep {
            (adv, 0)
        } else {
            (rep, FROM_REPEAT_STATE)
        }
    }

    fn backtrack(&self, i_len: usize, j_len: usize, matches: &mut [usize]) {
        let cols = self.cols;
        let mut j = j_len - 1;
        let mut in_repeat = self.best_at((i_len - 1) * cols + j).1 == FROM_REPEAT_STATE;
        for i in (1..i_len).rev() {
            matches[i] = j;
            if in_repeat {
                // A repeat always leaves an advance state on the same row.
                in_repeat = false;
            } else {
                let how = self.back[i * cols + j];
                j -= if how & FROM_SKIP != 0 { 2 } else { 1 };
                in_repeat = how & FROM_REPEAT_STATE != 0;
            }
        }
        matches[0] = j;
        debug_assert_eq!(j, 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn identical_sequences_align_diagonally() {
        let w = array![[1.0], [2.0], [3.0]];
        let p = align(w.view(), w.view()).unwrap();
        assert_eq!(p.pairs().collect::<Vec<_>>(), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(p.cost(), 0.0);
    }

    #[test]
    fn shifted_bump_takes_the_skip() {
        let w = array![[0.0], [1.0], [0.0]];
        let a = array![[0.0], [0.0], [1.0]];
        let p = align(w.view(), a.view()).unwrap();
        assert_eq!(p.matches(), &[0, 2, 2]);
        assert_eq!(p.cost(), 1.0);
        assert_eq!(dtw_distance(w.view(), a.view()).unwrap(), 1.0);
    }

    #[test]
    fn zero_inputs_tie_to_the_diagonal() {
        for len in 1..9 {
            let z = Array2::<f64>::zeros((len, 3));
            let p = align(z.view(), z.view()).unwrap();
            assert!(p.is_diagonal());
            assert_eq!(p.cost(), 0.0);
        }
    }

    #[test]
    fn single_element() {
        let d = dtw_distance(array![[2.0]].view(), array![[5.0]].view()).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn feasibility_bounds() {
        assert!(feasible(1, 1));
        assert!(!feasible(1, 2));
        assert!(feasible(2, 3));
        assert!(!feasible(2, 4));
        // 0,1,0 reaches row 1 from row 0 over three steps.
        assert!(feasible(4, 2));
        assert!(!feasible(5, 2));
        assert!(feasible(5, 3));
        assert!(!feasible(0, 1));
    }

    #[test]
    fn infeasible_geometry_is_an_error() {
        let w = Array2::<f64>::zeros((2, 1));
        let a = Array2::<f64>::zeros((4, 1));
        assert!(matches!(
            align(w.view(), a.view()),
            Err(Error::Infeasible { weights: 2, window: 4 })
        ));
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let w = array![[0.0], [f64::NAN]];
        let a = array![[0.0], [1.0]];
        assert!(matches!(align(w.view(), a.view()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let w = Array2::<f64>::zeros((2, 2));
        let a = Array2::<f64>::zeros((2, 3));
        assert!(matches!(align(w.view(), a.view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn validate_rejects_bad_paths() {
        assert!(validate_matches(&[0, 1, 2], 3).is_ok());
        assert!(validate_matches(&[0, 0, 0, 1], 2).is_err());
        assert!(validate_matches(&[0, 3], 4).is_err());
        assert!(validate_matches(&[1, 2], 3).is_err());
        assert!(validate_matches(&[0, 1], 3).is_err());
        assert!(validate_matches(&[], 1).is_err());
    }

    #[test]
    fn alternating_repeats() {
        // Steps 0, 1, 0.
        let w = array![[0.0], [0.0], [5.0], [5.0]];
        let a = array![[0.0], [5.0]];
        let p = align(w.view(), a.view()).unwrap();
        assert_eq!(p.matches(), &[0, 0, 1, 1]);
        assert_eq!(p.cost(), 0.0);
    }
}
