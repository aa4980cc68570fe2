//! Dense tensors and the handful of layers the transfer and loss networks
//! need, each with an explicit reverse-mode `backward`.
//!
//! Layers cache what their backward pass needs when run with `record = true`.
//! Calling `backward` consumes that cache; calling it without a recorded
//! forward pass is an error. Parameter gradients accumulate until zeroed.

mod activation;
mod conv;
pub mod format;
mod model;
mod norm;
mod tensor;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

pub use activation::{Relu, Tanh};
pub use conv::{conv_out, conv_transpose_out, Conv2d, ConvTranspose2d};
pub use model::{ArchConfig, TransferModel};
pub use norm::{InstanceNorm, INSTANCE_NORM_EPS};
pub use tensor::Tensor;

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    InstanceNorm,
    Relu,
    Tanh,
    Residual,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv => 0,
            LayerKind::ConvTranspose => 1,
            LayerKind::InstanceNorm => 2,
            LayerKind::Relu => 3,
            LayerKind::Tanh => 4,
            LayerKind::Residual => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerKind::Conv,
            1 => LayerKind::ConvTranspose,
            2 => LayerKind::InstanceNorm,
            3 => LayerKind::Relu,
            4 => LayerKind::Tanh,
            5 => LayerKind::Residual,
            _ => return None,
        })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::ConvTranspose => "conv_transpose",
            LayerKind::InstanceNorm => "instance_norm",
            LayerKind::Relu => "relu",
            LayerKind::Tanh => "tanh",
            LayerKind::Residual => "residual",
        })
    }
}

/// Architecture descriptor of one layer.
///
/// Convolutions use `pad = kernel / 2`; transposed convolutions additionally
/// use `output_pad = stride - 1`, so a stride-2 up-layer exactly undoes a
/// stride-2 down-layer on even extents. Parameter-free and normalization
/// layers carry `kernel = 0`, `stride = 1` and equal channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { kind: LayerKind::Conv, kernel, stride, in_channels, out_channels }
    }

    pub fn conv_transpose(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { kind: LayerKind::ConvTranspose, kernel, stride, in_channels, out_channels }
    }

    pub fn instance_norm(channels: usize) -> Self {
        Self::elementwise(LayerKind::InstanceNorm, channels)
    }

    pub fn relu(channels: usize) -> Self {
        Self::elementwise(LayerKind::Relu, channels)
    }

    pub fn tanh(channels: usize) -> Self {
        Self::elementwise(LayerKind::Tanh, channels)
    }

    pub fn residual(channels: usize, kernel: usize) -> Self {
        Self { kind: LayerKind::Residual, kernel, stride: 1, in_channels: channels, out_channels: channels }
    }

    fn elementwise(kind: LayerKind, channels: usize) -> Self {
        Self { kind, kernel: 0, stride: 1, in_channels: channels, out_channels: channels }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::param(alloc::format!("{} layer: {why}", self.kind)));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("zero channels");
        }
        match self.kind {
            LayerKind::Conv | LayerKind::ConvTranspose | LayerKind::Residual => {
                if self.kernel % 2 == 0 {
                    return bad("kernel must be odd");
                }
                if !matches!(self.stride, 1 | 2) {
                    return bad("stride must be 1 or 2");
                }
                if self.kind == LayerKind::Residual
                    && (self.stride != 1 || self.in_channels != self.out_channels)
                {
                    return bad("residual blocks keep shape");
                }
            }
            LayerKind::InstanceNorm | LayerKind::Relu | LayerKind::Tanh => {
                if self.kernel != 0 || self.stride != 1 || self.in_channels != self.out_channels {
                    return bad("elementwise layers have kernel 0, stride 1, equal channels");
                }
            }
        }
        Ok(())
    }

    /// Shapes of this layer's parameter tensors, in serialization order.
    pub fn param_shapes(&self) -> Vec<[usize; 4]> {
        let (k, ci, co) = (self.kernel, self.in_channels, self.out_channels);
        match self.kind {
            LayerKind::Conv => alloc::vec![[co, ci, k, k], [co, 1, 1, 1]],
            LayerKind::ConvTranspose => alloc::vec![[ci, co, k, k], [co, 1, 1, 1]],
            LayerKind::InstanceNorm => alloc::vec![[co, 1, 1, 1], [co, 1, 1, 1]],
            LayerKind::Relu | LayerKind::Tanh => Vec::new(),
            LayerKind::Residual => {
                let conv = [co, co, k, k];
                let vec = [co, 1, 1, 1];
                alloc::vec![conv, vec, vec, vec, conv, vec, vec, vec]
            }
        }
    }
}

/// Kaiming-uniform weights for fan-in `fan_in`, zero bias.
pub(crate) fn kaiming<T: Real, R: Rng>(rng: &mut R, shape: [usize; 4], fan_in: usize) -> Tensor<T> {
    let bound = num_traits::Float::sqrt(6.0 / fan_in.max(1) as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::parameter(shape, data).unwrap()
}

fn bias<T: Real>(channels: usize) -> Tensor<T> {
    Tensor::parameter([channels, 1, 1, 1], alloc::vec![T::zero(); channels]).unwrap()
}

/// conv -> instance norm -> relu -> conv -> instance norm, plus the skip.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub norm1: InstanceNorm<T>,
    pub relu: Relu<T>,
    pub conv2: Conv2d<T>,
    pub norm2: InstanceNorm<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new<R: Rng>(channels: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = channels * kernel * kernel;
        let mk = |rng: &mut R| {
            Conv2d::new(kaiming(rng, [channels, channels, kernel, kernel], fan_in), bias(channels), 1, kernel / 2)
                .unwrap()
        };
        let conv1 = mk(rng);
        let conv2 = mk(rng);
        Self {
            conv1,
            norm1: InstanceNorm::new(channels),
            relu: Relu::new(),
            conv2,
            norm2: InstanceNorm::new(channels),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let mut h = self.conv1.forward(x.clone(), record)?;
        h = self.norm1.forward(h, record)?;
        h = self.relu.forward(h, record)?;
        h = self.conv2.forward(h, record)?;
        h = self.norm2.forward(h, record)?;
        h.add_assign(&x);
        Ok(h)
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self.norm2.backward(dy.clone())?;
        g = self.conv2.backward(g)?;
        g = self.relu.backward(g)?;
        g = self.norm1.backward(g)?;
        g = self.conv1.backward(g)?;
        g.add_assign(&dy);
        Ok(g)
    }

    fn params_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
        ]
    }

    fn clear(&mut self) {
        self.conv1.clear();
        self.norm1.clear();
        self.relu.clear();
        self.conv2.clear();
        self.norm2.clear();
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    ConvTranspose(ConvTranspose2d<T>),
    InstanceNorm(InstanceNorm<T>),
    Relu(Relu<T>),
    Tanh(Tanh<T>),
    Residual(Box<ResidualBlock<T>>),
}

impl<T: Real> Layer<T> {
    /// Builds a freshly initialized layer.
    pub fn from_spec<R: Rng>(spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (k, s, ci, co) = (spec.kernel, spec.stride, spec.in_channels, spec.out_channels);
        Ok(match spec.kind {
            LayerKind::Conv => Layer::Conv(Conv2d::new(kaiming(rng, [co, ci, k, k], ci * k * k), bias(co), s, k / 2)?),
            LayerKind::ConvTranspose => {
                // Each output position receives about in * k^2 / s^2 contributions.
                let fan_in = (ci * k * k / (s * s)).max(1);
                Layer::ConvTranspose(ConvTranspose2d::new(
                    kaiming(rng, [ci, co, k, k], fan_in),
                    bias(co),
                    s,
                    k / 2,
                    s - 1,
                )?)
            }
            LayerKind::InstanceNorm => Layer::InstanceNorm(InstanceNorm::new(co)),
            LayerKind::Relu => Layer::Relu(Relu::new()),
            LayerKind::Tanh => Layer::Tanh(Tanh::new()),
            LayerKind::Residual => Layer::Residual(Box::new(ResidualBlock::new(co, k, rng))),
        })
    }

    pub fn forward(&mut self, x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x, record),
            Layer::ConvTranspose(l) => l.forward(x, record),
            Layer::InstanceNorm(l) => l.forward(x, record),
            Layer::Relu(l) => l.forward(x, record),
            Layer::Tanh(l) => l.forward(x, record),
            Layer::Residual(l) => l.forward(x, record),
        }
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::ConvTranspose(l) => l.backward(dy),
            Layer::InstanceNorm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Tanh(l) => l.backward(dy),
            Layer::Residual(l) => l.backward(dy),
        }
    }

    /// Parameter tensors in serialization order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::InstanceNorm(l) => alloc::vec![&mut l.gamma, &mut l.beta],
            Layer::Relu(_) | Layer::Tanh(_) => Vec::new(),
            Layer::Residual(l) => l.params_mut().into_iter().collect(),
        }
    }

    /// Drops any cached forward state.
    pub fn clear(&mut self) {
        match self {
            Layer::Conv(l) => l.clear(),
            Layer::ConvTranspose(l) => l.clear(),
            Layer::InstanceNorm(l) => l.clear(),
            Layer::Relu(l) => l.clear(),
            Layer::Tanh(l) => l.clear(),
            Layer::Residual(l) => l.clear(),
        }
    }
}
