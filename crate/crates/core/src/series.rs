//! Time series and labelled collections of them.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// One multivariate series: `T` time steps by `D` features, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Array2<f64>,
    label: Option<usize>,
    id: Option<String>,
}

impl Series {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty(format!(
                "series of shape {:?}",
                values.shape()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (t, d) = (pos / values.ncols(), pos % values.ncols());
            return Err(Error::NonFinite(format!("series value at step {t}, feature {d}")));
        }
        // Every kernel downstream slices rows directly.
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Series {
            values,
            label: None,
            id: None,
        })
    }

    pub fn labeled(values: Array2<f64>, label: usize) -> Result<Self> {
        Ok(Self::new(values)?.with_label(label))
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    /// Replace the values, keeping label and id. Same validation as [`Series::new`].
    pub fn map_values(&self, values: Array2<f64>) -> Result<Series> {
        let mut out = Series::new(values)?;
        out.label = self.label;
        out.id = self.id.clone();
        Ok(out)
    }
}

/// Labelled series sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<Series>,
    num_classes: usize,
    feature_dim: usize,
    fixed_length: Option<usize>,
}

impl Dataset {
    /// Every item must carry a label below `num_classes` and share the
    /// feature dimension of the first item.
    pub fn new(items: Vec<Series>, num_classes: usize) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Empty("dataset".into()))?;
        let feature_dim = first.dim();
        let mut fixed_length = Some(first.len());
        for (idx, s) in items.iter().enumerate() {
            if s.dim() != feature_dim {
                return Err(Error::Shape {
                    op: "dataset feature dimension",
                    left: vec![feature_dim],
                    right: vec![s.dim()],
                });
            }
            match s.label() {
                Some(l) if l < num_classes => {}
                Some(l) => {
                    return Err(Error::Label {
                        label: l,
                        classes: num_classes,
                    })
                }
                None => return Err(Error::Invalid(format!("dataset item {idx} has no label"))),
            }
            if fixed_length != Some(s.len()) {
                fixed_length = None;
            }
        }
        Ok(Dataset {
            items,
            num_classes,
            feature_dim,
            fixed_length,
        })
    }

    pub fn items(&self) -> &[Series] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Series> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Common length of all items, when they share one.
    pub fn fixed_length(&self) -> Option<usize> {
        self.fixed_length
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|s| s.label().unwrap_or(0)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for l in self.labels() {
            counts[l] += 1;
        }
        counts
    }

    /// Training sets must contain every class.
    pub fn check_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(k) => Err(Error::Invalid(format!("dataset: class {k} has no samples"))),
            None => Ok(()),
        }
    }

    /// Items at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let items = indices.iter().map(|&i| self.items[i].clone()).collect();
        Dataset::new(items, self.num_classes)
    }
}
