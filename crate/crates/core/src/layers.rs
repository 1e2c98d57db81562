//! Forward and backward passes for the network building blocks: valid
//! cross-correlation convolution, ReLU, max pooling, fully connected layers
//! and the softmax / sigmoid heads.
//!
//! Every layer has two forward entry points. [`Layer::forward`] caches what
//! the backward pass needs; [`Layer::infer`] takes `&self` and caches nothing,
//! so a trained network can be shared across threads for inference.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{layer}: expected {expected} input channels, got {actual}")]
    ChannelMismatch {
        layer: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("conv: kernel {kernel}x{kernel} does not fit a {height}x{width} input")]
    KernelTooLarge {
        kernel: usize,
        height: usize,
        width: usize,
    },
    #[error("maxpool: {height}x{width} is not divisible by window {window}")]
    NotDivisible {
        window: usize,
        height: usize,
        width: usize,
    },
    #[error("{layer}: input has {actual} values, expected {expected}")]
    InputSize {
        layer: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{0}: backward called before forward")]
    BackwardBeforeForward(&'static str),
    #[error("{layer}: gradient shape {actual:?} does not match output shape {expected:?}")]
    GradShape {
        layer: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid layer configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LayerError>;

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
    Tensor::from_fn(shape, |_| dist.sample(rng)).expect("non-empty shape")
}

#[derive(Debug, Clone)]
pub struct Conv2D {
    /// `(n_out, m_in, k, k)`.
    kernels: Tensor,
    bias: Tensor,
    stride: usize,
    cached_input: Option<Tensor>,
}

impl Conv2D {
    pub fn new(kernels: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        let &[n_out, m_in, kh, kw] = kernels.shape() else {
            return Err(LayerError::Config(format!(
                "conv kernels must be rank 4, got {:?}",
                kernels.shape()
            )));
        };
        if kh != kw {
            return Err(LayerError::Config(format!(
                "conv kernels must be square, got {kh}x{kw}"
            )));
        }
        if bias.shape() != [n_out] {
            return Err(LayerError::Config(format!(
                "conv bias shape {:?} does not match {n_out} output channels",
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(LayerError::Config("conv stride must be positive".into()));
        }
        debug_assert!(m_in >= 1);
        Ok(Self {
            kernels,
            bias,
            stride,
            cached_input: None,
        })
    }

    /// Randomly initialized layer with zero bias.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 {
            return Err(LayerError::Config("conv dimensions must be positive".into()));
        }
        let area = kernel * kernel;
        let kernels = glorot(
            &[out_channels, in_channels, kernel, kernel],
            in_channels * area,
            out_channels * area,
            rng,
        );
        Self::new(kernels, Tensor::zeros(&[out_channels])?, stride)
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (c, h, w) = match *input {
            [h, w] => (1, h, w),
            [c, h, w] => (c, h, w),
            _ => {
                return Err(LayerError::Config(format!(
                    "conv expects a (C,H,W) input, got {input:?}"
                )))
            }
        };
        if c != self.in_channels() {
            return Err(LayerError::ChannelMismatch {
                layer: "conv",
                expected: self.in_channels(),
                actual: c,
            });
        }
        let k = self.kernel_size();
        if h < k || w < k {
            return Err(LayerError::KernelTooLarge {
                kernel: k,
                height: h,
                width: w,
            });
        }
        Ok(vec![
            self.out_channels(),
            (h - k) / self.stride + 1,
            (w - k) / self.stride + 1,
        ])
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        let (m, h, w) = input.chw()?;
        let (n, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
        let (k, s) = (self.kernel_size(), self.stride);
        let x = input.data();
        let kern = self.kernels.data();
        let mut out = vec![0.0; n * oh * ow];
        for co in 0..n {
            let b = self.bias.data()[co];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = b;
                    for ci in 0..m {
                        let kbase = (co * m + ci) * k * k;
                        let ibase = ci * h * w;
                        for i in 0..k {
                            let row = ibase + (r * s + i) * w + c * s;
                            let krow = kbase + i * k;
                            for j in 0..k {
                                acc += x[row + j] * kern[krow + j];
                            }
                        }
                    }
                    out[(co * oh + r) * ow + c] = acc;
                }
            }
        }
        Ok(Tensor::from_values(&out_shape, out)?)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.infer(input)?;
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Returns `(grad_input, grad_kernels, grad_bias)`.
    pub fn backward(&self, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("conv"))?;
        let out_shape = self.output_shape(input.shape())?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(LayerError::GradShape {
                layer: "conv",
                expected: out_shape,
                actual: grad_out.shape().to_vec(),
            });
        }
        let (m, h, w) = input.chw()?;
        let (n, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
        let (k, s) = (self.kernel_size(), self.stride);
        let x = input.data();
        let kern = self.kernels.data();
        let g = grad_out.data();

        let mut gx = vec![0.0; x.len()];
        let mut gk = vec![0.0; kern.len()];
        let mut gb = vec![0.0; n];
        for co in 0..n {
            for r in 0..oh {
                for c in 0..ow {
                    let go = g[(co * oh + r) * ow + c];
                    if go == 0.0 {
                        continue;
                    }
                    gb[co] += go;
                    for ci in 0..m {
                        let kbase = (co * m + ci) * k * k;
                        let ibase = ci * h * w;
                        for i in 0..k {
                            let row = ibase + (r * s + i) * w + c * s;
                            let krow = kbase + i * k;
                            for j in 0..k {
                                gx[row + j] += go * kern[krow + j];
                                gk[krow + j] += go * x[row + j];
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::from_values(input.shape(), gx)?,
            Tensor::from_values(self.kernels.shape(), gk)?,
            Tensor::from_values(&[n], gb)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool {
    window: usize,
    /// Flat input index of the winner for every output cell, plus the input shape.
    cached_argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool {
    pub fn new(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(LayerError::Config(format!(
                "pooling window must be at least 2, got {window}"
            )));
        }
        Ok(Self {
            window,
            cached_argmax: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (c, h, w) = match *input {
            [h, w] => (1, h, w),
            [c, h, w] => (c, h, w),
            _ => {
                return Err(LayerError::Config(format!(
                    "maxpool expects a (C,H,W) input, got {input:?}"
                )))
            }
        };
        let k = self.window;
        if h % k != 0 || w % k != 0 {
            return Err(LayerError::NotDivisible {
                window: k,
                height: h,
                width: w,
            });
        }
        Ok(vec![c, h / k, w / k])
    }

    fn compute(&self, input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let out_shape = self.output_shape(input.shape())?;
        let (c, h, w) = input.chw()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let k = self.window;
        let x = input.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let mut best = ch * h * w + r * k * w + col * k;
                    for i in 0..k {
                        for j in 0..k {
                            let idx = ch * h * w + (r * k + i) * w + col * k + j;
                            // strict comparison keeps the first cell in row-major order on ties
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
        Ok((Tensor::from_values(&out_shape, out)?, arg))
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.compute(input)?.0)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, arg) = self.compute(input)?;
        self.cached_argmax = Some((arg, input.shape().to_vec()));
        Ok(out)
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let (arg, in_shape) = self
            .cached_argmax
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("maxpool"))?;
        if grad_out.len() != arg.len() {
            return Err(LayerError::GradShape {
                layer: "maxpool",
                expected: self.output_shape(in_shape)?,
                actual: grad_out.shape().to_vec(),
            });
        }
        let mut gx = Tensor::zeros(in_shape)?;
        let buf = gx.data_mut();
        for (&idx, &g) in arg.iter().zip(grad_out.data()) {
            buf[idx] += g;
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone)]
pub struct FullyConnected {
    /// `(n_out, n_in)`.
    weights: Tensor,
    bias: Tensor,
    cached_input: Option<Tensor>,
}

impl FullyConnected {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let &[n_out, _n_in] = weights.shape() else {
            return Err(LayerError::Config(format!(
                "fc weights must be rank 2, got {:?}",
                weights.shape()
            )));
        };
        if bias.shape() != [n_out] {
            return Err(LayerError::Config(format!(
                "fc bias shape {:?} does not match {n_out} outputs",
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            cached_input: None,
        })
    }

    pub fn init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(LayerError::Config("fc dimensions must be positive".into()));
        }
        let weights = glorot(&[n_out, n_in], n_in, n_out, rng);
        Self::new(weights, Tensor::zeros(&[n_out])?)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `Wx + b` for any input holding exactly `n_in` values; the input is
    /// read in flat row-major order.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.n_in() {
            return Err(LayerError::InputSize {
                layer: "fc",
                expected: self.n_in(),
                actual: x.len(),
            });
        }
        let flat = x.reshape(&[x.len()])?;
        Ok(self.weights.matvec(&flat)?.add(&self.bias)?)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    /// Returns `(grad_input, grad_weights, grad_bias)`; `grad_input` has the
    /// shape of the cached input.
    pub fn backward(&self, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("fc"))?;
        let (n_out, n_in) = (self.n_out(), self.n_in());
        if grad_out.len() != n_out {
            return Err(LayerError::GradShape {
                layer: "fc",
                expected: vec![n_out],
                actual: grad_out.shape().to_vec(),
            });
        }
        let g = grad_out.data();
        let w = self.weights.data();
        let xv = x.data();
        let mut gx = vec![0.0; n_in];
        let mut gw = vec![0.0; n_out * n_in];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                gx[i] += g[o] * row[i];
                gw[o * n_in + i] = g[o] * xv[i];
            }
        }
        Ok((
            Tensor::from_values(x.shape(), gx)?,
            Tensor::from_values(&[n_out, n_in], gw)?,
            Tensor::from_values(&[n_out], g.to_vec())?,
        ))
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Softmax over all entries of `x`, shifted by the maximum before
/// exponentiation.
pub fn softmax(x: &Tensor) -> Tensor {
    let m = x.max();
    let e = x.map(|v| (v - m).exp());
    let z = e.sum();
    e.mul_scalar(1.0 / z)
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cached_input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.cached_input = Some(x.clone());
        relu(x)
    }

    /// Passes the gradient where the input was strictly positive.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("relu"))?;
        let mask = x.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        Ok(grad_out.hadamard(&mask)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    cached_output: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = sigmoid(x);
        self.cached_output = Some(y.clone());
        y
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let y = self
            .cached_output
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("sigmoid"))?;
        Ok(grad_out.hadamard(&y.map(|s| s * (1.0 - s)))?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Softmax {
    cached_output: Option<Tensor>,
}

impl Softmax {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = softmax(x);
        self.cached_output = Some(y.clone());
        y
    }

    /// Jacobian-vector product `s * (g - <g, s>)`.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let s = self
            .cached_output
            .as_ref()
            .ok_or(LayerError::BackwardBeforeForward("softmax"))?;
        let dot: f64 = grad_out.hadamard(s)?.sum();
        Ok(s.hadamard(&grad_out.map(|g| g - dot))?)
    }
}

/// Discriminant used in checkpoints and layer names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Dense,
    Relu,
    Sigmoid,
    Softmax,
}

impl LayerKind {
    pub fn tag(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::MaxPool => "pool",
            LayerKind::Dense => "fc",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "conv" => LayerKind::Conv,
            "pool" => LayerKind::MaxPool,
            "fc" => LayerKind::Dense,
            "relu" => LayerKind::Relu,
            "sigmoid" => LayerKind::Sigmoid,
            "softmax" => LayerKind::Softmax,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2D),
    MaxPool(MaxPool),
    Dense(FullyConnected),
    Relu(Relu),
    Sigmoid(Sigmoid),
    Softmax(Softmax),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(_) => LayerKind::Conv,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::Sigmoid(_) => LayerKind::Sigmoid,
            Layer::Softmax(_) => LayerKind::Softmax,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::Relu(_) => Ok(relu(x)),
            Layer::Sigmoid(_) => Ok(sigmoid(x)),
            Layer::Softmax(_) => Ok(softmax(x)),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Softmax(l) => Ok(l.forward(x)),
        }
    }

    /// Gradient with respect to the layer input, followed by one gradient per
    /// learnable parameter in [`Layer::params`] order.
    pub fn backward(&self, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match self {
            Layer::Conv(l) => {
                let (gx, gk, gb) = l.backward(grad_out)?;
                Ok((gx, vec![gk, gb]))
            }
            Layer::Dense(l) => {
                let (gx, gw, gb) = l.backward(grad_out)?;
                Ok((gx, vec![gw, gb]))
            }
            Layer::MaxPool(l) => Ok((l.backward(grad_out)?, Vec::new())),
            Layer::Relu(l) => Ok((l.backward(grad_out)?, Vec::new())),
            Layer::Sigmoid(l) => Ok((l.backward(grad_out)?, Vec::new())),
            Layer::Softmax(l) => Ok((l.backward(grad_out)?, Vec::new())),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv(l) => l.output_shape(input),
            Layer::MaxPool(l) => l.output_shape(input),
            Layer::Dense(l) => {
                let n: usize = input.iter().product();
                if n != l.n_in() {
                    return Err(LayerError::InputSize {
                        layer: "fc",
                        expected: l.n_in(),
                        actual: n,
                    });
                }
                Ok(vec![l.n_out()])
            }
            _ => Ok(input.to_vec()),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Conv(_) | Layer::Dense(_) => &["weight", "bias"],
            _ => &[],
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv(l) => vec![&l.kernels, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            _ => Vec::new(),
        }
    }

    /// Hyper-parameters that are not learnable (stride, pooling window).
    pub fn hyper_params(&self) -> Vec<f64> {
        match self {
            Layer::Conv(l) => vec![l.stride as f64],
            Layer::MaxPool(l) => vec![l.window as f64],
            _ => Vec::new(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.cached_input = None,
            Layer::MaxPool(l) => l.cached_argmax = None,
            Layer::Dense(l) => l.cached_input = None,
            Layer::Relu(l) => l.cached_input = None,
            Layer::Sigmoid(l) => l.cached_output = None,
            Layer::Softmax(l) => l.cached_output = None,
        }
    }
}

impl From<Conv2D> for Layer {
    fn from(l: Conv2D) -> Self {
        Layer::Conv(l)
    }
}

impl From<MaxPool> for Layer {
    fn from(l: MaxPool) -> Self {
        Layer::MaxPool(l)
    }
}

impl From<FullyConnected> for Layer {
    fn from(l: FullyConnected) -> Self {
        Layer::Dense(l)
    }
}
