use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use super::batchnorm::{BatchNorm, BnCache, BnGrads, Mode};
use super::conv::{
    aligned_conv_forward, dwa_conv_backward, dwa_conv_forward, linear_conv_backward,
    linear_conv_forward, output_len, ConvFilterBank, ConvGrads, ConvMode, ConvTrace,
};
use super::dense::{softmax_cross_entropy, Activation, Dense, DenseGrads, LossOutput};
use crate::rng::{Rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub filters: usize,
    pub width: usize,
    pub stride: usize,
}

/// Everything that fixes the parameter shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGeometry {
    pub input_len: usize,
    pub input_dim: usize,
    pub conv1: ConvGeometry,
    pub conv2: ConvGeometry,
    pub fc1: usize,
    pub fc2: usize,
    pub classes: usize,
    pub mode: ConvMode,
}

/// Sequence lengths after each conv layer and the flattened width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub conv1_len: usize,
    pub conv2_len: usize,
    pub flatten: usize,
}

impl ModelGeometry {
    /// 50 + 50 filters of the given width and stride (the second layer spans
    /// all 50 channels), dense 400 and 100.
    pub fn standard(
        input_len: usize,
        input_dim: usize,
        width: usize,
        stride: usize,
        classes: usize,
        mode: ConvMode,
    ) -> Self {
        let conv = ConvGeometry {
            filters: 50,
            width,
            stride,
        };
        ModelGeometry {
            input_len,
            input_dim,
            conv1: conv,
            conv2: conv,
            fc1: 400,
            fc2: 100,
            classes,
            mode,
        }
    }

    pub fn shape_chain(&self) -> Result<ShapeChain> {
        let nonzero = [
            ("input_len", self.input_len),
            ("input_dim", self.input_dim),
            ("conv1.filters", self.conv1.filters),
            ("conv1.width", self.conv1.width),
            ("conv1.stride", self.conv1.stride),
            ("conv2.filters", self.conv2.filters),
            ("conv2.width", self.conv2.width),
            ("conv2.stride", self.conv2.stride),
            ("fc1", self.fc1),
            ("fc2", self.fc2),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = nonzero.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("model geometry: {name} must be positive")));
        }
        let conv1_len = output_len(self.input_len, self.conv1.width, self.conv1.stride).ok_or_else(|| {
            Error::Invalid(format!(
                "model geometry: conv1 width {} exceeds input length {}",
                self.conv1.width, self.input_len
            ))
        })?;
        let conv2_len = output_len(conv1_len, self.conv2.width, self.conv2.stride).ok_or_else(|| {
            Error::Invalid(format!(
                "model geometry: conv2 width {} exceeds conv1 output length {}",
                self.conv2.width, conv1_len
            ))
        })?;
        Ok(ShapeChain {
            conv1_len,
            conv2_len,
            flatten: conv2_len * self.conv2.filters,
        })
    }
}

/// Trainable parameter blocks, in declaration (and checkpoint) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Conv1Weights,
    Conv1Biases,
    Bn1Gamma,
    Bn1Beta,
    Conv2Weights,
    Conv2Biases,
    Bn2Gamma,
    Bn2Beta,
    Fc1Weights,
    Fc1Bias,
    Fc2Weights,
    Fc2Bias,
    OutWeights,
    OutBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 14] = [
        ParamGroup::Conv1Weights,
        ParamGroup::Conv1Biases,
        ParamGroup::Bn1Gamma,
        ParamGroup::Bn1Beta,
        ParamGroup::Conv2Weights,
        ParamGroup::Conv2Biases,
        ParamGroup::Bn2Gamma,
        ParamGroup::Bn2Beta,
        ParamGroup::Fc1Weights,
        ParamGroup::Fc1Bias,
        ParamGroup::Fc2Weights,
        ParamGroup::Fc2Bias,
        ParamGroup::OutWeights,
        ParamGroup::OutBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Conv1Weights => "conv1.w",
            ParamGroup::Conv1Biases => "conv1.b",
            ParamGroup::Bn1Gamma => "bn1.gamma",
            ParamGroup::Bn1Beta => "bn1.beta",
            ParamGroup::Conv2Weights => "conv2.w",
            ParamGroup::Conv2Biases => "conv2.b",
            ParamGroup::Bn2Gamma => "bn2.gamma",
            ParamGroup::Bn2Beta => "bn2.beta",
            ParamGroup::Fc1Weights => "fc1.w",
            ParamGroup::Fc1Bias => "fc1.b",
            ParamGroup::Fc2Weights => "fc2.w",
            ParamGroup::Fc2Bias => "fc2.b",
            ParamGroup::OutWeights => "out.w",
            ParamGroup::OutBias => "out.b",
        }
    }

    /// Conv filters follow the decaying schedule; everything else the static rate.
    pub fn is_conv(self) -> bool {
        matches!(
            self,
            ParamGroup::Conv1Weights
                | ParamGroup::Conv1Biases
                | ParamGroup::Conv2Weights
                | ParamGroup::Conv2Biases
        )
    }
}

/// Parameters of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    geometry: ModelGeometry,
    conv1: ConvFilterBank,
    bn1: BatchNorm,
    conv2: ConvFilterBank,
    bn2: BatchNorm,
    fc1: Dense,
    fc2: Dense,
    out: Dense,
}

/// Match sets of both conv layers for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAlignment {
    pub conv1: ConvTrace,
    pub conv2: ConvTrace,
}

#[derive(Debug, Clone, Copy)]
pub struct PassOptions<'a> {
    pub mode: Mode,
    /// Reuse these match sets instead of re-aligning (aligned mode only).
    pub frozen: Option<&'a [SampleAlignment]>,
    /// Run per-sample work on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl PassOptions<'static> {
    pub fn train() -> Self {
        PassOptions {
            mode: Mode::Train,
            frozen: None,
            parallel: false,
        }
    }

    pub fn inference() -> Self {
        PassOptions {
            mode: Mode::Inference,
            frozen: None,
            parallel: false,
        }
    }
}

impl<'a> PassOptions<'a> {
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn frozen<'b>(self, alignments: &'b [SampleAlignment]) -> PassOptions<'b> {
        PassOptions {
            mode: self.mode,
            frozen: Some(alignments),
            parallel: self.parallel,
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    parallel: bool,
    inputs: Vec<Array2<f64>>,
    bn1: BnCache,
    h1: Array3<f64>,
    bn2: BnCache,
    h2: Array2<f64>,
    fc1_out: Array2<f64>,
    fc2_out: Array2<f64>,
    logits: Array2<f64>,
    alignments: Vec<SampleAlignment>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Per-sample match sets; empty for linear models.
    pub fn alignments(&self) -> &[SampleAlignment] {
        &self.alignments
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }
}

/// Gradients for every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv1: ConvGrads,
    pub bn1: BnGrads,
    pub conv2: ConvGrads,
    pub bn2: BnGrads,
    pub fc1: DenseGrads,
    pub fc2: DenseGrads,
    pub out: DenseGrads,
}

impl Gradients {
    pub fn group(&self, group: ParamGroup) -> &[f64] {
        let s = match group {
            ParamGroup::Conv1Weights => self.conv1.weights.as_slice(),
            ParamGroup::Conv1Biases => self.conv1.biases.as_slice(),
            ParamGroup::Bn1Gamma => self.bn1.gamma.as_slice(),
            ParamGroup::Bn1Beta => self.bn1.beta.as_slice(),
            ParamGroup::Conv2Weights => self.conv2.weights.as_slice(),
            ParamGroup::Conv2Biases => self.conv2.biases.as_slice(),
            ParamGroup::Bn2Gamma => self.bn2.gamma.as_slice(),
            ParamGroup::Bn2Beta => self.bn2.beta.as_slice(),
            ParamGroup::Fc1Weights => self.fc1.weights.as_slice(),
            ParamGroup::Fc1Bias => self.fc1.bias.as_slice(),
            ParamGroup::Fc2Weights => self.fc2.weights.as_slice(),
            ParamGroup::Fc2Bias => self.fc2.bias.as_slice(),
            ParamGroup::OutWeights => self.out.weights.as_slice(),
            ParamGroup::OutBias => self.out.bias.as_slice(),
        };
        s.expect("gradients are contiguous")
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let s = match group {
            ParamGroup::Conv1Weights => self.conv1.weights.as_slice_mut(),
            ParamGroup::Conv1Biases => self.conv1.biases.as_slice_mut(),
            ParamGroup::Bn1Gamma => self.bn1.gamma.as_slice_mut(),
            ParamGroup::Bn1Beta => self.bn1.beta.as_slice_mut(),
            ParamGroup::Conv2Weights => self.conv2.weights.as_slice_mut(),
            ParamGroup::Conv2Biases => self.conv2.biases.as_slice_mut(),
            ParamGroup::Bn2Gamma => self.bn2.gamma.as_slice_mut(),
            ParamGroup::Bn2Beta => self.bn2.beta.as_slice_mut(),
            ParamGroup::Fc1Weights => self.fc1.weights.as_slice_mut(),
            ParamGroup::Fc1Bias => self.fc1.bias.as_slice_mut(),
            ParamGroup::Fc2Weights => self.fc2.weights.as_slice_mut(),
            ParamGroup::Fc2Bias => self.fc2.bias.as_slice_mut(),
            ParamGroup::OutWeights => self.out.weights.as_slice_mut(),
            ParamGroup::OutBias => self.out.bias.as_slice_mut(),
        };
        s.expect("gradients are contiguous")
    }
}

fn map_samples<T, F>(count: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

fn stack(maps: &[Array2<f64>]) -> Array3<f64> {
    let (t, c) = maps[0].dim();
    let mut out = Array3::zeros((maps.len(), t, c));
    for (mut dst, src) in out.outer_iter_mut().zip(maps) {
        dst.assign(src);
    }
    out
}

impl ModelState {
    /// Scaled-uniform weights from the seed's init stream, zero biases,
    /// `gamma = 1`, `beta = 0`.
    pub fn init(geometry: ModelGeometry, seed: u64) -> Result<Self> {
        let chain = geometry.shape_chain()?;
        let mut rng = Rng::new(seed, Stream::Init);
        let g = &geometry;
        let conv1 = ConvFilterBank::glorot(g.conv1.filters, g.conv1.width, g.input_dim, g.conv1.stride, &mut rng)?;
        let conv2 =
            ConvFilterBank::glorot(g.conv2.filters, g.conv2.width, g.conv1.filters, g.conv2.stride, &mut rng)?;
        let fc1 = Dense::glorot(chain.flatten, g.fc1, Activation::Tanh, &mut rng)?;
        let fc2 = Dense::glorot(g.fc1, g.fc2, Activation::Tanh, &mut rng)?;
        let out = Dense::glorot(g.fc2, g.classes, Activation::Identity, &mut rng)?;
        Ok(ModelState {
            bn1: BatchNorm::with_defaults(g.conv1.filters)?,
            bn2: BatchNorm::with_defaults(g.conv2.filters)?,
            geometry,
            conv1,
            conv2,
            fc1,
            fc2,
            out,
        })
    }

    /// Every weight and bias zero, `gamma = 1`, `beta = 0`.
    pub fn zeros(geometry: ModelGeometry) -> Result<Self> {
        let chain = geometry.shape_chain()?;
        let g = &geometry;
        Ok(ModelState {
            conv1: ConvFilterBank::zeros(g.conv1.filters, g.conv1.width, g.input_dim, g.conv1.stride)?,
            bn1: BatchNorm::with_defaults(g.conv1.filters)?,
            conv2: ConvFilterBank::zeros(g.conv2.filters, g.conv2.width, g.conv1.filters, g.conv2.stride)?,
            bn2: BatchNorm::with_defaults(g.conv2.filters)?,
            fc1: Dense::zeros(chain.flatten, g.fc1, Activation::Tanh)?,
            fc2: Dense::zeros(g.fc1, g.fc2, Activation::Tanh)?,
            out: Dense::zeros(g.fc2, g.classes, Activation::Identity)?,
            geometry,
        })
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geometry
    }

    pub fn mode(&self) -> ConvMode {
        self.geometry.mode
    }

    /// Same parameters, other convolution mode.
    pub fn with_mode(mut self, mode: ConvMode) -> Self {
        self.geometry.mode = mode;
        self
    }

    pub fn conv1(&self) -> &ConvFilterBank {
        &self.conv1
    }

    pub fn conv2(&self) -> &ConvFilterBank {
        &self.conv2
    }

    pub fn bn1(&self) -> &BatchNorm {
        &self.bn1
    }

    pub fn bn2(&self) -> &BatchNorm {
        &self.bn2
    }

    pub fn bn1_mut(&mut self) -> &mut BatchNorm {
        &mut self.bn1
    }

    pub fn bn2_mut(&mut self) -> &mut BatchNorm {
        &mut self.bn2
    }

    pub fn dense_layers(&self) -> [&Dense; 3] {
        [&self.fc1, &self.fc2, &self.out]
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        let s = match group {
            ParamGroup::Conv1Weights => self.conv1.weights().as_slice(),
            ParamGroup::Conv1Biases => self.conv1.biases().as_slice(),
            ParamGroup::Bn1Gamma => self.bn1.gamma.as_slice(),
            ParamGroup::Bn1Beta => self.bn1.beta.as_slice(),
            ParamGroup::Conv2Weights => self.conv2.weights().as_slice(),
            ParamGroup::Conv2Biases => self.conv2.biases().as_slice(),
            ParamGroup::Bn2Gamma => self.bn2.gamma.as_slice(),
            ParamGroup::Bn2Beta => self.bn2.beta.as_slice(),
            ParamGroup::Fc1Weights => self.fc1.weights.as_slice(),
            ParamGroup::Fc1Bias => self.fc1.bias.as_slice(),
            ParamGroup::Fc2Weights => self.fc2.weights.as_slice(),
            ParamGroup::Fc2Bias => self.fc2.bias.as_slice(),
            ParamGroup::OutWeights => self.out.weights.as_slice(),
            ParamGroup::OutBias => self.out.bias.as_slice(),
        };
        s.expect("parameters are contiguous")
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        match group {
            ParamGroup::Conv1Weights => self.conv1.weights_mut(),
            ParamGroup::Conv1Biases => self.conv1.biases_mut(),
            ParamGroup::Conv2Weights => self.conv2.weights_mut(),
            ParamGroup::Conv2Biases => self.conv2.biases_mut(),
            ParamGroup::Bn1Gamma => self.bn1.gamma.as_slice_mut().unwrap(),
            ParamGroup::Bn1Beta => self.bn1.beta.as_slice_mut().unwrap(),
            ParamGroup::Bn2Gamma => self.bn2.gamma.as_slice_mut().unwrap(),
            ParamGroup::Bn2Beta => self.bn2.beta.as_slice_mut().unwrap(),
            ParamGroup::Fc1Weights => self.fc1.weights.as_slice_mut().unwrap(),
            ParamGroup::Fc1Bias => self.fc1.bias.as_slice_mut().unwrap(),
            ParamGroup::Fc2Weights => self.fc2.weights.as_slice_mut().unwrap(),
            ParamGroup::Fc2Bias => self.fc2.bias.as_slice_mut().unwrap(),
            ParamGroup::OutWeights => self.out.weights.as_slice_mut().unwrap(),
            ParamGroup::OutBias => self.out.bias.as_slice_mut().unwrap(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.group(g).len()).sum()
    }

    /// Rounds every parameter and running statistic to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for g in ParamGroup::ALL {
            for v in self.group_mut(g) {
                *v = *v as f32 as f64;
            }
        }
        for bn in [&mut self.bn1, &mut self.bn2] {
            if bn.is_initialized() {
                let mean = bn.running_mean().mapv(|v| v as f32 as f64);
                let var = bn.running_var().mapv(|v| v as f32 as f64);
                bn.set_running_stats(mean, var).expect("same shapes");
            }
        }
    }

    fn check_batch(&self, batch: &[ArrayView2<f64>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let want = [self.geometry.input_len, self.geometry.input_dim];
        if let Some(bad) = batch.iter().find(|x| x.shape() != want) {
            return Err(Error::Shape {
                op: "model input",
                left: want.to_vec(),
                right: bad.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn conv_layer(
        &self,
        bank: &ConvFilterBank,
        inputs: &[ArrayView2<f64>],
        frozen: Option<Vec<&ConvTrace>>,
        parallel: bool,
    ) -> Result<(Array3<f64>, Vec<ConvTrace>)> {
        match (self.geometry.mode, frozen) {
            (ConvMode::Linear, _) => {
                let maps = map_samples(inputs.len(), parallel, |b| linear_conv_forward(inputs[b], bank))?;
                Ok((stack(&maps), Vec::new()))
            }
            (ConvMode::Dwa, Some(traces)) => {
                if traces.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "{} frozen alignments for a batch of {}",
                        traces.len(),
                        inputs.len()
                    )));
                }
                let maps = map_samples(inputs.len(), parallel, |b| {
                    aligned_conv_forward(inputs[b], bank, traces[b])
                })?;
                Ok((stack(&maps), traces.into_iter().cloned().collect()))
            }
            (ConvMode::Dwa, None) => {
                let pairs = map_samples(inputs.len(), parallel, |b| dwa_conv_forward(inputs[b], bank))?;
                let (maps, traces): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                Ok((stack(&maps), traces))
            }
        }
    }

    /// Runs the network on a batch of `input_len x input_dim` samples.
    pub fn forward(&self, batch: &[ArrayView2<f64>], opts: PassOptions<'_>) -> Result<ForwardTrace> {
        self.check_batch(batch)?;
        let parallel = opts.parallel;
        let frozen1 = opts.frozen.map(|f| f.iter().map(|a| &a.conv1).collect());
        let frozen2 = opts.frozen.map(|f| f.iter().map(|a| &a.conv2).collect());

        let (z1, traces1) = self.conv_layer(&self.conv1, batch, frozen1, parallel)?;
        let (y1, bn1) = self.bn1.forward(z1.view(), opts.mode)?;
        let h1 = y1.mapv(f64::tanh);

        let h1_views: Vec<ArrayView2<f64>> = h1.outer_iter().collect();
        let (z2, traces2) = self.conv_layer(&self.conv2, &h1_views, frozen2, parallel)?;
        let (y2, bn2) = self.bn2.forward(z2.view(), opts.mode)?;
        let batch_size = batch.len();
        let flat = y2.len() / batch_size;
        let h2 = y2
            .mapv(f64::tanh)
            .into_shape_with_order((batch_size, flat))
            .expect("standard layout");

        let fc1_out = self.fc1.forward(h2.view())?;
        let fc2_out = self.fc2.forward(fc1_out.view())?;
        let logits = self.out.forward(fc2_out.view())?;

        let alignments = traces1
            .into_iter()
            .zip(traces2)
            .map(|(conv1, conv2)| SampleAlignment { conv1, conv2 })
            .collect();
        Ok(ForwardTrace {
            parallel,
            inputs: batch.iter().map(|x| x.to_owned()).collect(),
            bn1,
            h1,
            bn2,
            h2,
            fc1_out,
            fc2_out,
            logits,
            alignments,
        })
    }

    fn conv_backward(
        &self,
        bank: &ConvFilterBank,
        inputs: &[ArrayView2<f64>],
        traces: Vec<&ConvTrace>,
        delta: &Array3<f64>,
        parallel: bool,
    ) -> Result<(ConvGrads, Vec<Array2<f64>>)> {
        let per_sample = map_samples(inputs.len(), parallel, |b| {
            let d = delta.index_axis(Axis(0), b);
            match self.geometry.mode {
                ConvMode::Linear => linear_conv_backward(inputs[b], bank, d),
                ConvMode::Dwa => dwa_conv_backward(traces[b], inputs[b], bank, d),
            }
        })?;
        // Fixed summation order regardless of scheduling.
        let mut total = ConvGrads::zeros_like(bank);
        let mut grad_inputs = Vec::with_capacity(per_sample.len());
        for (g, gi) in per_sample {
            total.accumulate(&g);
            grad_inputs.push(gi);
        }
        Ok((total, grad_inputs))
    }

    /// Mean cross-entropy of the traced batch and its gradient for every
    /// parameter, with the trace's match sets held fixed.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<(LossOutput, Gradients)> {
        let batch = trace.batch_size();
        if labels.len() != batch {
            return Err(Error::Contract(format!("{} labels for a batch of {batch}", labels.len())));
        }
        if self.geometry.mode == ConvMode::Dwa && trace.alignments.len() != batch {
            return Err(Error::Contract("aligned backward without match sets".into()));
        }
        let loss = softmax_cross_entropy(trace.logits.view(), labels)?;

        let (g_out, d_fc2) = self.out.backward(trace.fc2_out.view(), trace.logits.view(), loss.grad.view())?;
        let (g_fc2, d_fc1) = self.fc2.backward(trace.fc1_out.view(), trace.fc2_out.view(), d_fc2.view())?;
        let (g_fc1, d_h2) = self.fc1.backward(trace.h2.view(), trace.fc1_out.view(), d_fc1.view())?;

        let (t2, n2) = (trace.bn2_shape().1, trace.bn2_shape().2);
        let d_y2 = (&d_h2 * &trace.h2.mapv(|v| 1.0 - v * v))
            .into_shape_with_order((batch, t2, n2))
            .expect("standard layout");
        let (d_z2, g_bn2) = self.bn2.backward(&trace.bn2, d_y2.view())?;

        let h1_views: Vec<ArrayView2<f64>> = trace.h1.outer_iter().collect();
        let traces2 = trace.alignments.iter().map(|a| &a.conv2).collect();
        let (g_conv2, d_h1) = self.conv_backward(&self.conv2, &h1_views, traces2, &d_z2, trace.parallel)?;

        let d_y1 = stack(&d_h1) * &trace.h1.mapv(|v| 1.0 - v * v);
        let (d_z1, g_bn1) = self.bn1.backward(&trace.bn1, d_y1.view())?;

        let input_views: Vec<ArrayView2<f64>> = trace.inputs.iter().map(|x| x.view()).collect();
        let traces1 = trace.alignments.iter().map(|a| &a.conv1).collect();
        let (g_conv1, _) = self.conv_backward(&self.conv1, &input_views, traces1, &d_z1, trace.parallel)?;

        Ok((
            loss,
            Gradients {
                conv1: g_conv1,
                bn1: g_bn1,
                conv2: g_conv2,
                bn2: g_bn2,
                fc1: g_fc1,
                fc2: g_fc2,
                out: g_out,
            },
        ))
    }

    /// Folds the batch statistics of a training-mode pass into the running averages.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) {
        self.bn1.update_running(&trace.bn1);
        self.bn2.update_running(&trace.bn2);
    }

    /// Mean loss of a batch under the given pass options.
    pub fn loss(&self, batch: &[ArrayView2<f64>], labels: &[usize], opts: PassOptions<'_>) -> Result<f64> {
        let trace = self.forward(batch, opts)?;
        Ok(softmax_cross_entropy(trace.logits.view(), labels)?.loss)
    }
}

impl ForwardTrace {
    fn bn2_shape(&self) -> (usize, usize, usize) {
        let batch = self.inputs.len();
        let channels = self.bn2.batch_mean().len();
        (batch, self.h2.ncols() / channels, channels)
    }
}
