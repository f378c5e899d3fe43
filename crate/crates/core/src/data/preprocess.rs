use ndarray::{Array1, Array2};

use crate::series::{Dataset, Series};
use crate::{Error, Result};

/// Linear interpolation along time to exactly `len` steps.
///
/// Endpoints are kept; `T == len` returns the input unchanged and a single
/// step is repeated.
pub fn resample(series: &Series, len: usize) -> Result<Series> {
    if len < 2 {
        return Err(Error::Invalid(format!("resample length {len} (must be at least 2)")));
    }
    let src = series.values();
    let t = src.nrows();
    if t == len {
        return Ok(series.clone());
    }
    let mut out = Array2::zeros((len, src.ncols()));
    for k in 0..len {
        if t == 1 {
            out.row_mut(k).assign(&src.row(0));
            continue;
        }
        let num = k * (t - 1);
        let lo = num / (len - 1);
        let rem = num % (len - 1);
        if rem == 0 {
            out.row_mut(k).assign(&src.row(lo));
        } else {
            let frac = rem as f64 / (len - 1) as f64;
            for d in 0..src.ncols() {
                let (a, b) = (src[[lo, d]], src[[lo + 1, d]]);
                out[[k, d]] = (a + (b - a) * frac).clamp(a.min(b), a.max(b));
            }
        }
    }
    series.map_values(out)
}

pub fn resample_dataset(data: &Dataset, len: usize) -> Result<Dataset> {
    let items = data.items().iter().map(|s| resample(s, len)).collect::<Result<Vec<_>>>()?;
    Dataset::new(items, data.num_classes())
}

/// Per-feature mean and standard deviation over every frame of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Population standard deviation; zero for constant features.
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset for normalisation".into()));
        }
        let dim = data.feature_dim();
        let mut sum = Array1::<f64>::zeros(dim);
        let mut frames = 0usize;
        for item in data.items() {
            for row in item.values().rows() {
                sum += &row;
                frames += 1;
            }
        }
        let mean = sum / frames as f64;
        let mut sq = Array1::<f64>::zeros(dim);
        for item in data.items() {
            for row in item.values().rows() {
                let c = &row - &mean;
                sq += &(&c * &c);
            }
        }
        let std = (sq / frames as f64).mapv(f64::sqrt);
        Ok(Standardizer { mean, std })
    }

    /// Features with zero spread pass through untouched, neither centred nor scaled.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.feature_dim() != self.mean.len() {
            return Err(Error::Shape {
                op: "standardize",
                left: vec![data.feature_dim()],
                right: vec![self.mean.len()],
            });
        }
        let items = data
            .items()
            .iter()
            .map(|s| {
                let mut v = s.values().to_owned();
                for (d, mut col) in v.columns_mut().into_iter().enumerate() {
                    if self.std[d] > 0.0 {
                        col.mapv_inplace(|x| (x - self.mean[d]) / self.std[d]);
                    }
                }
                s.map_values(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(items, data.num_classes())
    }
}

/// Fits on `data` and returns it normalised together with the statistics,
/// which should then be applied unchanged to the other splits.
pub fn zscore(data: &Dataset) -> Result<(Dataset, Standardizer)> {
    let s = Standardizer::fit(data)?;
    Ok((s.apply(data)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn resample_examples() {
        let s = Series::new(array![[0.0], [2.0]]).unwrap();
        assert_eq!(resample(&s, 3).unwrap().values(), array![[0.0], [1.0], [2.0]]);
        let c = Series::new(Array2::from_elem((7, 2), 4.5)).unwrap();
        assert!(resample(&c, 19).unwrap().values().iter().all(|&v| v == 4.5));
        let one = Series::new(array![[1.0, 2.0]]).unwrap();
        assert_eq!(resample(&one, 3).unwrap().len(), 3);
        assert!(resample(&s, 1).is_err());
    }

    #[test]
    fn resample_keeps_label_and_id() {
        let s = Series::labeled(array![[0.0], [1.0], [5.0]], 2).unwrap().with_id("x");
        let r = resample(&s, 10).unwrap();
        assert_eq!(r.label(), Some(2));
        assert_eq!(r.id(), Some("x"));
    }

    proptest! {
        #[test]
        fn resample_identity_and_bounds(
            t in 1usize..30,
            len in 2usize..60,
            seed in proptest::collection::vec(-100.0f64..100.0, 60),
        ) {
            let v = Array2::from_shape_fn((t, 2), |(i, d)| seed[(2 * i + d) % 60]);
            let s = Series::new(v.clone()).unwrap();
            let same = resample(&s, t.max(2)).unwrap();
            if t >= 2 {
                prop_assert_eq!(same.values(), v.view());
            }
            let r = resample(&s, len).unwrap();
            prop_assert_eq!(r.len(), len);
            for d in 0..2 {
                let col = v.column(d);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for &x in r.values().column(d) {
                    prop_assert!(x >= lo && x <= hi);
                }
                prop_assert_eq!(r.values()[[0, d]], v[[0, d]]);
                prop_assert_eq!(r.values()[[len - 1, d]], v[[t - 1, d]]);
            }
        }
    }

    fn dataset(rows: Vec<Array2<f64>>) -> Dataset {
        let items = rows.into_iter().map(|v| Series::labeled(v, 0).unwrap()).collect();
        Dataset::new(items, 1).unwrap()
    }

    #[test]
    fn zscore_centres_training_data() {
        let ds = dataset(vec![
            array![[1.0, 10.0, 3.0], [2.0, 30.0, 3.0]],
            array![[7.0, -4.0, 3.0]],
        ]);
        let (norm, stats) = zscore(&ds).unwrap();
        assert_eq!(stats.std[2], 0.0);
        for d in 0..2 {
            let mut m = 0.0;
            let mut v = 0.0;
            for item in norm.items() {
                for x in item.values().column(d) {
                    m += x;
                    v += x * x;
                }
            }
            assert!((m / 3.0).abs() <= 1e-10);
            assert!((v / 3.0 - 1.0).abs() <= 1e-10);
        }
        // Constant feature untouched.
        assert_eq!(norm.items()[1].values()[[0, 2]], 3.0);
    }

    #[test]
    fn standardised_data_is_a_fixed_point() {
        let ds = dataset(vec![array![[-1.0, 1.0]], array![[1.0, -1.0]]]);
        let (norm, _) = zscore(&ds).unwrap();
        for (a, b) in norm.items().iter().zip(ds.items()) {
            for (x, y) in a.values().iter().zip(b.values().iter()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn statistics_come_from_the_fitted_split() {
        let train = dataset(vec![array![[0.0], [2.0]]]);
        let test = dataset(vec![array![[4.0]]]);
        let (_, s) = zscore(&train).unwrap();
        assert_eq!(s.apply(&test).unwrap().items()[0].values()[[0, 0]], 3.0);
        let wide = dataset(vec![array![[4.0, 1.0]]]);
        assert!(s.apply(&wide).is_err());
    }
}
