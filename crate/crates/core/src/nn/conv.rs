//! Temporal convolution with linear or DTW-aligned weight matching.
//!
//! Inputs and feature maps are time-major (`T x channels`). Output position
//! `j` reads input rows `j*S .. j*S + I`. In aligned mode each filter is first
//! warped onto that window with [`crate::align`] and the response sums
//! `<w_i, a_{j*S + m(i)}>` over the match set instead of `<w_i, a_{j*S + i}>`.
//! Gradients treat the match set as fixed.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::Rng as _;

use crate::align::{local_distance, AlignmentPath, Aligner};
use crate::linalg::{axpy, dot};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Filters warped onto each window by DTW.
    Dwa,
    /// Conventional one-to-one convolution.
    Linear,
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvMode::Dwa => "dwa",
            ConvMode::Linear => "linear",
        })
    }
}

impl FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dwa" => Ok(ConvMode::Dwa),
            "linear" => Ok(ConvMode::Linear),
            other => Err(Error::Invalid(format!("conv mode {other:?} (expected dwa or linear)"))),
        }
    }
}

/// `N` filters of `I x D` shared weights, one bias each, and a stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFilterBank {
    weights: Array3<f64>,
    biases: Array1<f64>,
    stride: usize,
}

/// Gradients for a filter bank, same shapes as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Array3<f64>,
    pub biases: Array1<f64>,
}

impl ConvGrads {
    pub fn zeros_like(bank: &ConvFilterBank) -> Self {
        ConvGrads {
            weights: Array3::zeros(bank.weights.dim()),
            biases: Array1::zeros(bank.filters()),
        }
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &ConvGrads) {
        self.weights += &other.weights;
        self.biases += &other.biases;
    }
}

impl ConvFilterBank {
    pub fn new(weights: Array3<f64>, biases: Array1<f64>, stride: usize) -> Result<Self> {
        let (n, i, d) = weights.dim();
        if n == 0 || i == 0 || d == 0 || stride == 0 {
            return Err(Error::Invalid(format!(
                "filter bank: filters={n} width={i} channels={d} stride={stride}"
            )));
        }
        if biases.len() != n {
            return Err(Error::Shape {
                op: "filter bank biases",
                left: vec![n],
                right: vec![biases.len()],
            });
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter bank".into()));
        }
        let weights = weights.as_standard_layout().into_owned();
        Ok(ConvFilterBank {
            weights,
            biases,
            stride,
        })
    }

    pub fn zeros(filters: usize, width: usize, channels: usize, stride: usize) -> Result<Self> {
        Self::new(
            Array3::zeros((filters, width, channels)),
            Array1::zeros(filters),
            stride,
        )
    }

    /// Scaled-uniform init with limit `sqrt(6 / (fan_in + fan_out))`,
    /// `fan_in = I*D`, `fan_out = I*N`; biases start at zero.
    pub fn glorot(filters: usize, width: usize, channels: usize, stride: usize, rng: &mut Rng) -> Result<Self> {
        let limit = (6.0 / ((width * channels + width * filters) as f64)).sqrt();
        let weights = Array3::from_shape_simple_fn((filters, width, channels), || {
            rng.random_range(-limit..=limit)
        });
        Self::new(weights, Array1::zeros(filters), stride)
    }

    pub fn filters(&self) -> usize {
        self.weights.dim().0
    }

    pub fn width(&self) -> usize {
        self.weights.dim().1
    }

    pub fn channels(&self) -> usize {
        self.weights.dim().2
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weights(&self) -> &Array3<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.as_slice_mut().expect("standard layout")
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        self.biases.as_slice_mut().expect("contiguous")
    }

    /// Number of output positions for an input of `len` steps, if any.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        output_len(len, self.width(), self.stride)
    }

    fn filter(&self, n: usize) -> &[f64] {
        let size = self.width() * self.channels();
        &self.weights.as_slice().expect("standard layout")[n * size..(n + 1) * size]
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<usize> {
        if input.ncols() != self.channels() {
            return Err(Error::Shape {
                op: "conv input channels",
                left: vec![self.filters(), self.width(), self.channels()],
                right: input.shape().to_vec(),
            });
        }
        self.output_len(input.nrows()).ok_or_else(|| Error::Shape {
            op: "conv input shorter than filter",
            left: vec![self.width()],
            right: input.shape().to_vec(),
        })
    }
}

/// `floor((len - width) / stride) + 1`, or `None` when `len < width`.
pub fn output_len(len: usize, width: usize, stride: usize) -> Option<usize> {
    if len < width || width == 0 || stride == 0 {
        None
    } else {
        Some((len - width) / stride + 1)
    }
}

/// The match sets chosen by one aligned forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTrace {
    stride: usize,
    // (output position, filter, weight index) -> window row
    matches: Array3<usize>,
    // (output position, filter) -> DTW cost
    costs: Array2<f64>,
}

impl ConvTrace {
    /// One-to-one matches everywhere.
    pub fn diagonal(positions: usize, filters: usize, width: usize, stride: usize) -> Self {
        ConvTrace {
            stride,
            matches: Array3::from_shape_fn((positions, filters, width), |(_, _, i)| i),
            costs: Array2::from_elem((positions, filters), f64::NAN),
        }
    }

    pub fn positions(&self) -> usize {
        self.matches.dim().0
    }

    pub fn filters(&self) -> usize {
        self.matches.dim().1
    }

    pub fn width(&self) -> usize {
        self.matches.dim().2
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Window offset for `window_start = position * stride`.
    pub fn window_start(&self, position: usize) -> usize {
        position * self.stride
    }

    pub fn matches(&self, position: usize, filter: usize) -> &[usize] {
        let w = self.width();
        let f = self.filters();
        let start = (position * f + filter) * w;
        &self.matches.as_slice().expect("standard layout")[start..start + w]
    }

    pub fn path(&self, position: usize, filter: usize) -> AlignmentPath {
        AlignmentPath::from_matches(
            self.matches(position, filter).to_vec(),
            self.width(),
            self.costs[(position, filter)],
        )
        .expect("trace paths are valid")
    }

    pub fn is_all_diagonal(&self) -> bool {
        self.matches
            .indexed_iter()
            .all(|((_, _, i), &m)| i == m)
    }

    fn check(&self, bank: &ConvFilterBank, positions: usize) -> Result<()> {
        let expect = (positions, bank.filters(), bank.width());
        if self.matches.dim() != expect || self.stride != bank.stride() {
            return Err(Error::Contract(format!(
                "trace of shape {:?} stride {} does not belong to a bank of shape {:?} stride {} over {} positions",
                self.matches.dim(),
                self.stride,
                bank.weights().dim(),
                bank.stride(),
                positions
            )));
        }
        Ok(())
    }
}

fn check_delta(delta: &ArrayView2<f64>, positions: usize, filters: usize) -> Result<()> {
    if delta.dim() != (positions, filters) {
        return Err(Error::Contract(format!(
            "conv delta of shape {:?}, expected {:?}",
            delta.shape(),
            [positions, filters]
        )));
    }
    Ok(())
}

/// Conventional convolution, `T_out x N`.
pub fn linear_conv_forward(input: ArrayView2<f64>, bank: &ConvFilterBank) -> Result<Array2<f64>> {
    let positions = bank.check_input(&input)?;
    let a = input.as_standard_layout();
    let a = a.as_slice().expect("standard layout");
    let (width, d, stride) = (bank.width(), bank.channels(), bank.stride());
    let mut out = Array2::zeros((positions, bank.filters()));
    for n in 0..bank.filters() {
        let w = bank.filter(n);
        for j in 0..positions {
            let start = j * stride;
            let mut acc = 0.0;
            for i in 0..width {
                acc += dot(&w[i * d..(i + 1) * d], &a[(start + i) * d..(start + i + 1) * d]);
            }
            out[(j, n)] = acc + bank.biases[n];
        }
    }
    Ok(out)
}

#[inline]
fn matched_response(w: &[f64], a: &[f64], d: usize, start: usize, matches: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (i, &m) in matches.iter().enumerate() {
        let row = start + m;
        acc += dot(&w[i * d..(i + 1) * d], &a[row * d..(row + 1) * d]);
    }
    acc
}

/// Aligned convolution: re-aligns every filter to every window, then sums
/// the matched products. Returns the `T_out x N` map and the match sets.
pub fn dwa_conv_forward(input: ArrayView2<f64>, bank: &ConvFilterBank) -> Result<(Array2<f64>, ConvTrace)> {
    let positions = bank.check_input(&input)?;
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("conv input".into()));
    }
    let a = input.as_standard_layout();
    let a = a.as_slice().expect("standard layout");
    let (filters, width, d, stride) = (bank.filters(), bank.width(), bank.channels(), bank.stride());
    let len = input.nrows();

    let mut out = Array2::zeros((positions, filters));
    let mut matches = Array3::zeros((positions, filters, width));
    let mut costs = Array2::zeros((positions, filters));
    let mut aligner = Aligner::default();
    // Distance from each weight row of one filter to each input row; windows
    // overlap, so rows are shared between positions.
    let mut dist = vec![0.0; width * len];
    let mut path = vec![0usize; width];

    for n in 0..filters {
        let w = bank.filter(n);
        for i in 0..width {
            let wi = &w[i * d..(i + 1) * d];
            for k in 0..len {
                dist[i * len + k] = local_distance(wi, &a[k * d..(k + 1) * d]);
            }
        }
        for j in 0..positions {
            let start = j * stride;
            let cost = aligner.align_by(width, width, |i, m| dist[i * len + start + m], &mut path);
            costs[(j, n)] = cost;
            for (slot, &m) in matches.slice_mut(ndarray::s![j, n, ..]).iter_mut().zip(&path) {
                *slot = m;
            }
            out[(j, n)] = matched_response(w, a, d, start, &path) + bank.biases[n];
        }
    }
    Ok((out, ConvTrace { stride, matches, costs }))
}

/// Aligned convolution with the match sets taken from `trace` instead of
/// recomputed.
pub fn aligned_conv_forward(
    input: ArrayView2<f64>,
    bank: &ConvFilterBank,
    trace: &ConvTrace,
) -> Result<Array2<f64>> {
    let positions = bank.check_input(&input)?;
    trace.check(bank, positions)?;
    let a = input.as_standard_layout();
    let a = a.as_slice().expect("standard layout");
    let d = bank.channels();
    let mut out = Array2::zeros((positions, bank.filters()));
    for n in 0..bank.filters() {
        let w = bank.filter(n);
        for j in 0..positions {
            let start = trace.window_start(j);
            out[(j, n)] = matched_response(w, a, d, start, trace.matches(j, n)) + bank.biases[n];
        }
    }
    Ok(out)
}

/// Gradients of the aligned convolution with the match sets of `trace` held
/// fixed. `delta` is `dC/dz`, shaped `T_out x N`. Returns the parameter
/// gradients and `dC/d input`.
pub fn dwa_conv_backward(
    trace: &ConvTrace,
    input: ArrayView2<f64>,
    bank: &ConvFilterBank,
    delta: ArrayView2<f64>,
) -> Result<(ConvGrads, Array2<f64>)> {
    let positions = bank
        .check_input(&input)
        .map_err(|e| Error::Contract(e.to_string()))?;
    trace.check(bank, positions)?;
    check_delta(&delta, positions, bank.filters())?;
    let a = input.as_standard_layout();
    let a = a.as_slice().expect("standard layout");
    let d = bank.channels();
    let mut grads = ConvGrads::zeros_like(bank);
    let mut grad_input = Array2::zeros(input.dim());
    {
        let gw = grads.weights.as_slice_mut().unwrap();
        let gi = grad_input.as_slice_mut().unwrap();
        let filter_size = bank.width() * d;
        for j in 0..positions {
            let start = trace.window_start(j);
            for n in 0..bank.filters() {
                let g = delta[(j, n)];
                grads.biases[n] += g;
                let w = bank.filter(n);
                for (i, &m) in trace.matches(j, n).iter().enumerate() {
                    let row = start + m;
                    let off = n * filter_size + i * d;
                    axpy(g, &a[row * d..(row + 1) * d], &mut gw[off..off + d]);
                    axpy(g, &w[i * d..(i + 1) * d], &mut gi[row * d..(row + 1) * d]);
                }
            }
        }
    }
    Ok((grads, grad_input))
}

/// Gradients of the conventional convolution.
pub fn linear_conv_backward(
    input: ArrayView2<f64>,
    bank: &ConvFilterBank,
    delta: ArrayView2<f64>,
) -> Result<(ConvGrads, Array2<f64>)> {
    let positions = bank.check_input(&input)?;
    check_delta(&delta, positions, bank.filters())?;
    let a = input.as_standard_layout();
    let a = a.as_slice().expect("standard layout");
    let (width, d, stride) = (bank.width(), bank.channels(), bank.stride());
    let mut grads = ConvGrads::zeros_like(bank);
    let mut grad_input = Array2::zeros(input.dim());
    {
        let gw = grads.weights.as_slice_mut().unwrap();
        let gi = grad_input.as_slice_mut().unwrap();
        let filter_size = width * d;
        for j in 0..positions {
            let start = j * stride;
            for n in 0..bank.filters() {
                let g = delta[(j, n)];
                grads.biases[n] += g;
                let w = bank.filter(n);
                for i in 0..width {
                    let row = start + i;
                    let off = n * filter_size + i * d;
                    axpy(g, &a[row * d..(row + 1) * d], &mut gw[off..off + d]);
                    axpy(g, &w[i * d..(i + 1) * d], &mut gi[row * d..(row + 1) * d]);
                }
            }
        }
    }
    Ok((grads, grad_input))
}
