//! Batch normalization over feature maps shaped `batch x time x channel`.
//!
//! Statistics are per channel, pooled over batch and time. Training mode
//! normalizes with the biased batch variance; inference uses the running
//! averages, which are updated separately via [`BatchNorm::update_running`]
//! so the forward pass itself stays pure.

use ndarray::{Array1, Array3, ArrayView3, Axis, Ix2};

use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    running_mean: Array1<f64>,
    running_var: Array1<f64>,
    epsilon: f64,
    momentum: f64,
    initialized: bool,
}

/// Forward-pass values needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    x_hat: Array3<f64>,
    inv_std: Array1<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

impl BnCache {
    pub fn batch_mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn batch_var(&self) -> &Array1<f64> {
        &self.var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BnGrads {
    pub fn accumulate(&mut self, other: &BnGrads) {
        self.gamma += &other.gamma;
        self.beta += &other.beta;
    }
}

impl BatchNorm {
    /// `gamma = 1`, `beta = 0`, running statistics unset.
    pub fn new(channels: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if channels == 0 || !(epsilon > 0.0) || !(momentum > 0.0 && momentum <= 1.0) {
            return Err(Error::Invalid(format!(
                "batch norm: channels={channels} epsilon={epsilon} momentum={momentum}"
            )));
        }
        Ok(BatchNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            epsilon,
            momentum,
            initialized: false,
        })
    }

    pub fn with_defaults(channels: usize) -> Result<Self> {
        Self::new(channels, DEFAULT_EPSILON, DEFAULT_MOMENTUM)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn running_mean(&self) -> &Array1<f64> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Array1<f64> {
        &self.running_var
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Set the inference statistics directly.
    pub fn set_running_stats(&mut self, mean: Array1<f64>, var: Array1<f64>) -> Result<()> {
        if mean.len() != self.channels() || var.len() != self.channels() {
            return Err(Error::Shape {
                op: "batch norm running stats",
                left: vec![self.channels()],
                right: vec![mean.len(), var.len()],
            });
        }
        if var.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("batch norm running stats".into()));
        }
        self.running_mean = mean;
        self.running_var = var;
        self.initialized = true;
        Ok(())
    }

    pub fn forward(&self, x: ArrayView3<f64>, mode: Mode) -> Result<(Array3<f64>, BnCache)> {
        let (b, t, c) = x.dim();
        if c != self.channels() {
            return Err(Error::Shape {
                op: "batch norm input channels",
                left: vec![self.channels()],
                right: x.shape().to_vec(),
            });
        }
        let m = b * t;
        let flat = x.to_shape((m, c)).map_err(|e| Error::Contract(e.to_string()))?;
        let (mean, var) = match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(Error::Invalid(format!(
                        "batch norm training batch: {m} values per channel (need at least 2)"
                    )));
                }
                let mean = flat.sum_axis(Axis(0)) / m as f64;
                let centered = &flat - &mean;
                let var = (&centered * &centered).sum_axis(Axis(0)) / m as f64;
                (mean, var)
            }
            Mode::Inference => {
                if !self.initialized {
                    return Err(Error::Uninitialized);
                }
                (self.running_mean.clone(), self.running_var.clone())
            }
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let x_hat = (&flat - &mean) * &inv_std;
        let out = &x_hat * &self.gamma + &self.beta;
        let shape = (b, t, c);
        Ok((
            into3(out, shape),
            BnCache {
                mode,
                x_hat: into3(x_hat, shape),
                inv_std,
                mean,
                var,
            },
        ))
    }

    /// `delta` is `dC/d output`; returns `dC/d input` and the parameter gradients.
    pub fn backward(&self, cache: &BnCache, delta: ArrayView3<f64>) -> Result<(Array3<f64>, BnGrads)> {
        if delta.dim() != cache.x_hat.dim() {
            return Err(Error::Contract(format!(
                "batch norm delta of shape {:?}, cache of shape {:?}",
                delta.shape(),
                cache.x_hat.shape()
            )));
        }
        let (b, t, c) = delta.dim();
        let m = b * t;
        let d = delta.to_shape((m, c)).unwrap();
        let x_hat = cache.x_hat.to_shape((m, c)).unwrap();
        let grads = BnGrads {
            gamma: (&d * &x_hat).sum_axis(Axis(0)),
            beta: d.sum_axis(Axis(0)),
        };
        let d_xhat = &d * &self.gamma;
        let dx = match cache.mode {
            Mode::Train => {
                let sum_d = d_xhat.sum_axis(Axis(0));
                let sum_dx = (&d_xhat * &x_hat).sum_axis(Axis(0));
                let scale = &cache.inv_std / m as f64;
                ((&d_xhat * m as f64) - &sum_d - &x_hat * &sum_dx) * &scale
            }
            Mode::Inference => &d_xhat * &cache.inv_std,
        };
        Ok((into3(dx, (b, t, c)), grads))
    }

    /// Exponential moving average toward the batch statistics of a training-mode pass.
    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        if self.initialized {
            self.running_mean = &self.running_mean * (1.0 - m) + &cache.mean * m;
            self.running_var = &self.running_var * (1.0 - m) + &cache.var * m;
        } else {
            self.running_mean = cache.mean.clone();
            self.running_var = cache.var.clone();
            self.initialized = true;
        }
    }
}

fn into3(a: ndarray::Array<f64, Ix2>, shape: (usize, usize, usize)) -> Array3<f64> {
    a.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .expect("element count preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut bn = BatchNorm::with_defaults(2).unwrap();
        bn.beta = ndarray::array![0.25, -1.0];
        let x = Array3::from_shape_fn((3, 4, 2), |(_, _, c)| 3.0 + c as f64);
        let (y, _) = bn.forward(x.view(), Mode::Train).unwrap();
        for ((_, _, c), &v) in y.indexed_iter() {
            assert_eq!(v, bn.beta[c]);
        }
    }

    #[test]
    fn standardized_input_passes_through() {
        let bn = BatchNorm::with_defaults(1).unwrap();
        let x = Array3::from_shape_vec((2, 2, 1), vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let (y, _) = bn.forward(x.view(), Mode::Train).unwrap();
        let factor = 1.0 / (1.0 + 1e-5f64).sqrt();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b * factor).abs() < 1e-15);
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn two_values_become_plus_minus_one() {
        let bn = BatchNorm::new(1, 1e-12, 0.1).unwrap();
        let x = Array3::from_shape_vec((1, 2, 1), vec![0.0, 2.0]).unwrap();
        let (y, _) = bn.forward(x.view(), Mode::Train).unwrap();
        assert!((y[(0, 0, 0)] + 1.0).abs() < 1e-10);
        assert!((y[(0, 1, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inference_requires_statistics() {
        let mut bn = BatchNorm::with_defaults(1).unwrap();
        let x = Array3::from_shape_vec((1, 2, 1), vec![0.0, 2.0]).unwrap();
        assert!(matches!(bn.forward(x.view(), Mode::Inference), Err(Error::Uninitialized)));
        let (_, cache) = bn.forward(x.view(), Mode::Train).unwrap();
        bn.update_running(&cache);
        assert_eq!(bn.running_mean()[0], 1.0);
        assert_eq!(bn.running_var()[0], 1.0);
        bn.forward(x.view(), Mode::Inference).unwrap();
        // Second update blends with momentum 0.1.
        let x2 = Array3::from_shape_vec((1, 2, 1), vec![2.0, 4.0]).unwrap();
        let (_, cache) = bn.forward(x2.view(), Mode::Train).unwrap();
        bn.update_running(&cache);
        assert!((bn.running_mean()[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn single_value_training_batch_is_rejected() {
        let bn = BatchNorm::with_defaults(1).unwrap();
        let x = Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap();
        assert!(bn.forward(x.view(), Mode::Train).is_err());
    }

    #[test]
    fn zero_delta_gives_zero_gradients() {
        let bn = BatchNorm::with_defaults(3).unwrap();
        let x = Array3::from_shape_fn((2, 5, 3), |(b, t, c)| (b * 7 + t * 3 + c) as f64 * 0.37 % 1.3);
        let (_, cache) = bn.forward(x.view(), Mode::Train).unwrap();
        let (dx, g) = bn.backward(&cache, Array3::zeros((2, 5, 3)).view()).unwrap();
        assert!(dx.iter().chain(g.gamma.iter()).chain(g.beta.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn gamma_gradient_is_delta_dot_xhat() {
        let bn = BatchNorm::with_defaults(1).unwrap();
        let x = Array3::from_shape_vec((1, 4, 1), vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let (y, cache) = bn.forward(x.view(), Mode::Train).unwrap();
        let delta = Array3::from_shape_vec((1, 4, 1), vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let (_, g) = bn.backward(&cache, delta.view()).unwrap();
        // gamma = 1 and beta = 0, so the output is x_hat.
        let expect: f64 = delta.iter().zip(y.iter()).map(|(d, xh)| d * xh).sum();
        assert!((g.gamma[0] - expect).abs() < 1e-14);
        assert_eq!(g.beta[0], 2.0 - 1.0 + 0.5 + 0.25);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm::with_defaults(2).unwrap();
        bn.gamma = ndarray::array![1.3, 0.7];
        bn.beta = ndarray::array![0.1, -0.4];
        let x = Array3::from_shape_fn((3, 4, 2), |(b, t, c)| ((b * 5 + t * 2 + c * 3) as f64).sin());
        let weights = Array3::from_shape_fn((3, 4, 2), |(b, t, c)| ((b + 2 * t + 5 * c) as f64).cos());
        let loss = |bn: &BatchNorm, x: &Array3<f64>| {
            let (y, _) = bn.forward(x.view(), Mode::Train).unwrap();
            (&y * &weights).sum()
        };
        let (_, cache) = bn.forward(x.view(), Mode::Train).unwrap();
        let (dx, g) = bn.backward(&cache, weights.view()).unwrap();
        let h = 1e-5;
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            xm.as_slice_mut().unwrap()[idx] -= h;
            let fd = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * h);
            let an = dx.as_slice().unwrap()[idx];
            assert!(rel(an, fd) < 1e-6 || (an - fd).abs() < 1e-9, "x[{idx}]: {an} vs {fd}");
        }
        for c in 0..2 {
            let mut p = bn.clone();
            let mut m = bn.clone();
            p.gamma[c] += h;
            m.gamma[c] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel(g.gamma[c], fd) < 1e-6);
            let mut p = bn.clone();
            let mut m = bn.clone();
            p.beta[c] += h;
            m.beta[c] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel(g.beta[c], fd) < 1e-6);
        }
    }
}
