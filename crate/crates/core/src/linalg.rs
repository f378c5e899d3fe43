//! Shape-checked matrix helpers over `ndarray` plus the two reduction
//! kernels (`dot`, `squared_distance`) that every layer shares.
//!
//! The kernels fix their summation order, so two code paths that call them
//! on the same rows produce bit-identical results.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

fn same_shape(op: &'static str, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn add(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    same_shape("add", &a, &b)?;
    Ok(&a + &b)
}

pub fn sub(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    same_shape("sub", &a, &b)?;
    Ok(&a - &b)
}

pub fn scale(a: ArrayView2<f64>, factor: f64) -> Array2<f64> {
    a.mapv(|x| x * factor)
}

pub fn matvec(m: ArrayView2<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    if m.ncols() != v.len() {
        return Err(Error::Shape {
            op: "matvec",
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    Ok(m.dot(&v))
}

/// Rows `start..start + len` as a view.
pub fn rows(m: ArrayView2<'_, f64>, start: usize, len: usize) -> Result<ArrayView2<'_, f64>> {
    if start + len > m.nrows() {
        return Err(Error::Shape {
            op: "rows",
            left: m.shape().to_vec(),
            right: vec![start, len],
        });
    }
    Ok(m.slice_move(s![start..start + len, ..]))
}

/// Inner product with a fixed four-lane summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

/// Squared Euclidean distance with the same lane layout as [`dot`].
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn add_rows() {
        let a = array![[1.0, 2.0]];
        let b = array![[3.0, 4.0]];
        assert_eq!(add(a.view(), b.view()).unwrap(), array![[4.0, 6.0]]);
    }

    #[test]
    fn scale_by_zero() {
        let a = array![[1.0, -1.0]];
        assert_eq!(scale(a.view(), 0.0), array![[0.0, 0.0]]);
    }

    #[test]
    fn identity_matvec() {
        let eye = Array2::<f64>::eye(3);
        let v = array![5.0, 6.0, 7.0];
        assert_eq!(matvec(eye.view(), v.view()).unwrap(), v);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 2));
        let msg = sub(a.view(), b.view()).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
        let v = Array1::<f64>::zeros(2);
        assert!(matvec(a.view(), v.view()).is_err());
    }

    #[test]
    fn row_slice() {
        let a = array![[1.0], [2.0], [3.0]];
        assert_eq!(rows(a.view(), 1, 2).unwrap(), array![[2.0], [3.0]]);
        assert!(rows(a.view(), 2, 2).is_err());
    }

    #[test]
    fn kernels_match_naive_sums() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i * i) as f64 * 0.1).collect();
        let naive_dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let naive_sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((dot(&a, &b) - naive_dot).abs() < 1e-12);
        assert!((squared_distance(&a, &b) - naive_sq).abs() < 1e-12);
    }
}
