use ndarray::{Array2, ArrayView2};

use crate::nn::{ModelState, PassOptions};
use crate::series::Dataset;
use crate::{Error, Result};

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Rows are true classes, columns predictions.
    pub confusion: Array2<usize>,
}

/// Argmax class per item in inference mode; ties go to the lowest index.
pub fn predict(model: &ModelState, dataset: &Dataset, parallel: bool) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset".into()));
    }
    let mut out = Vec::with_capacity(dataset.len());
    for chunk in dataset.items().chunks(EVAL_CHUNK) {
        let views: Vec<ArrayView2<f64>> = chunk.iter().map(|s| s.values()).collect();
        let trace = model.forward(&views, PassOptions::inference().parallel(parallel))?;
        for row in trace.logits().rows() {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

pub fn evaluate(model: &ModelState, dataset: &Dataset, parallel: bool) -> Result<Evaluation> {
    let classes = model.geometry().classes;
    if dataset.num_classes() > classes {
        return Err(Error::Invalid(format!(
            "dataset has {} classes, model outputs {classes}",
            dataset.num_classes()
        )));
    }
    let predictions = predict(model, dataset, parallel)?;
    let mut confusion = Array2::zeros((classes, classes));
    let mut correct = 0;
    for (truth, pred) in dataset.labels().into_iter().zip(predictions) {
        confusion[(truth, pred)] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    let total = dataset.len();
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        correct,
        total,
        confusion,
    })
}
