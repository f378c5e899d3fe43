//! Fully connected layers and the softmax cross-entropy head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// `y = act(x W^T + b)` with `W` shaped `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() || weights.is_empty() {
            return Err(Error::Shape {
                op: "dense parameters",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense parameters".into()));
        }
        Ok(Dense {
            weights: weights.as_standard_layout().into_owned(),
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Result<Self> {
        Self::new(Array2::zeros((outputs, inputs)), Array1::zeros(outputs), activation)
    }

    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..=limit));
        Self::new(weights, Array1::zeros(outputs), activation)
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `x` is `batch x in`; returns post-activation `batch x out`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape {
                op: "dense input",
                left: self.weights.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        let mut z = x.dot(&self.weights.t()) + &self.bias;
        if self.activation == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
        Ok(z)
    }

    /// `y` is the forward output for `x`; `delta` is `dC/dy`.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        delta: ArrayView2<f64>,
    ) -> Result<(DenseGrads, Array2<f64>)> {
        if delta.dim() != y.dim() || x.nrows() != y.nrows() || y.ncols() != self.outputs() {
            return Err(Error::Contract(format!(
                "dense backward shapes: x {:?}, y {:?}, delta {:?}",
                x.shape(),
                y.shape(),
                delta.shape()
            )));
        }
        let dz = match self.activation {
            Activation::Tanh => &delta * &y.mapv(|v| 1.0 - v * v),
            Activation::Identity => delta.to_owned(),
        };
        let grads = DenseGrads {
            weights: dz.t().dot(&x),
            bias: dz.sum_axis(Axis(0)),
        };
        let dx = dz.dot(&self.weights);
        Ok((grads, dx))
    }
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean cross-entropy over the batch.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// `dC/d logits` for the batch-mean loss.
    pub grad: Array2<f64>,
    pub probs: Array2<f64>,
}

pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<LossOutput> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch || batch == 0 {
        return Err(Error::Shape {
            op: "softmax cross-entropy labels",
            left: logits.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (b, &label) in labels.iter().enumerate() {
        // log-softmax directly avoids log(0) on saturated rows.
        let row = logits.row(b);
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let log_norm = row.mapv(|v| (v - max).exp()).sum().ln() + max;
        loss += log_norm - logits[(b, label)];
        grad[(b, label)] -= 1.0;
    }
    grad /= batch as f64;
    Ok(LossOutput {
        loss: loss / batch as f64,
        grad,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::array;

    #[test]
    fn uniform_logits() {
        let out = softmax_cross_entropy(Array2::zeros((1, 4)).view(), &[2]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-15);
        assert!(out.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(out.grad, array![[0.25, 0.25, -0.75, 0.25]]);
    }

    #[test]
    fn label_out_of_range() {
        let r = softmax_cross_entropy(Array2::zeros((1, 3)).view(), &[3]);
        assert!(matches!(r, Err(Error::Label { label: 3, classes: 3 })));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let logits = array![[1000.0, -3.0, 2.5], [0.1, 0.2, -40.0]];
        let p = softmax(logits.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_layer_outputs_zero() {
        let layer = Dense::zeros(5, 3, Activation::Tanh).unwrap();
        let y = layer.forward(Array2::from_elem((2, 5), 0.7).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(9, Stream::Init);
        let layer = Dense::glorot(4, 3, Activation::Tanh, &mut rng).unwrap();
        let head = Dense::glorot(3, 3, Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_fn((2, 4), |(b, i)| ((b * 4 + i) as f64 * 0.9).sin());
        let labels = [1, 2];
        let loss = |l: &Dense, h: &Dense, x: &Array2<f64>| {
            let y = l.forward(x.view()).unwrap();
            let z = h.forward(y.view()).unwrap();
            softmax_cross_entropy(z.view(), &labels).unwrap().loss
        };
        let y = layer.forward(x.view()).unwrap();
        let z = head.forward(y.view()).unwrap();
        let out = softmax_cross_entropy(z.view(), &labels).unwrap();
        let (gh, dy) = head.backward(y.view(), z.view(), out.grad.view()).unwrap();
        let (gl, dx) = layer.backward(x.view(), y.view(), dy.view()).unwrap();
        let h = 1e-5;
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
        for idx in 0..layer.weights.len() {
            let (mut p, mut m) = (layer.clone(), layer.clone());
            p.weights.as_slice_mut().unwrap()[idx] += h;
            m.weights.as_slice_mut().unwrap()[idx] -= h;
            let fd = (loss(&p, &head, &x) - loss(&m, &head, &x)) / (2.0 * h);
            assert!(rel(gl.weights.as_slice().unwrap()[idx], fd) < 1e-6);
        }
        for idx in 0..head.bias.len() {
            let (mut p, mut m) = (head.clone(), head.clone());
            p.bias[idx] += h;
            m.bias[idx] -= h;
            let fd = (loss(&layer, &p, &x) - loss(&layer, &m, &x)) / (2.0 * h);
            assert!(rel(gh.bias[idx], fd) < 1e-6);
        }
        for idx in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.as_slice_mut().unwrap()[idx] += h;
            m.as_slice_mut().unwrap()[idx] -= h;
            let fd = (loss(&layer, &head, &p) - loss(&layer, &head, &m)) / (2.0 * h);
            assert!(rel(dx.as_slice().unwrap()[idx], fd) < 1e-6);
        }
    }
}
