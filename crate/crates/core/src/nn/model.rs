use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Layer, LayerKind, LayerSpec, Tensor};
use crate::{Error, Real, Result};

/// Shape of the feed-forward transfer network.
///
/// Defaults follow the feed-forward style-transfer design: widths 32/64/128,
/// a 9x9 stem and 9x9 output layer, 3x3 elsewhere, five residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub widths: [usize; 3],
    pub residual_blocks: usize,
    pub outer_kernel: usize,
    pub inner_kernel: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { widths: [32, 64, 128], residual_blocks: 5, outer_kernel: 9, inner_kernel: 3 }
    }
}

impl ArchConfig {
    /// Smaller widths for CPU-only experiments.
    pub fn desk() -> Self {
        Self { widths: [16, 32, 64], ..Self::default() }
    }

    /// Three down-convolutions with ReLU, residual blocks, three transposed
    /// convolutions and the tanh output stage.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let [a, b, c] = self.widths;
        let (ko, ki) = (self.outer_kernel, self.inner_kernel);
        let mut specs = Vec::new();
        for (k, s, ci, co) in [(ko, 1, 3, a), (ki, 2, a, b), (ki, 2, b, c)] {
            specs.push(LayerSpec::conv(k, s, ci, co));
            specs.push(LayerSpec::instance_norm(co));
            specs.push(LayerSpec::relu(co));
        }
        for _ in 0..self.residual_blocks {
            specs.push(LayerSpec::residual(c, ki));
        }
        for (ci, co) in [(c, b), (b, a)] {
            specs.push(LayerSpec::conv_transpose(ki, 2, ci, co));
            specs.push(LayerSpec::instance_norm(co));
            specs.push(LayerSpec::relu(co));
        }
        specs.push(LayerSpec::conv_transpose(ko, 1, a, 3));
        specs.push(LayerSpec::tanh(3));
        specs
    }
}

/// Feed-forward generative network mapping a 3-channel image in `[0, 1]`
/// to a 3-channel image of the same size in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TransferModel<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
}

impl<T: Real> TransferModel<T> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::from_specs(arch.layer_specs(), seed)
    }

    /// Builds and initializes an arbitrary layer stack.
    pub fn from_specs(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut channels = 3;
        let mut scale: i32 = 0;
        for s in &specs {
            s.validate()?;
            if s.in_channels != channels {
                return Err(Error::param(alloc::format!(
                    "{} layer expects {} channels but receives {channels}",
                    s.kind, s.in_channels
                )));
            }
            channels = s.out_channels;
            match (s.kind, s.stride) {
                (LayerKind::Conv, 2) => scale += 1,
                (LayerKind::ConvTranspose, 2) => scale -= 1,
                _ => {}
            }
        }
        if channels != 3 || scale != 0 {
            return Err(Error::param("model must map 3 channels to 3 channels at equal size"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs.iter().map(|s| Layer::from_spec(s, &mut rng)).collect::<Result<_>>()?;
        Ok(Self { specs, layers })
    }

    /// A model with no layers: the identity map. Used as a test fixture.
    pub fn passthrough() -> Self {
        Self { specs: Vec::new(), layers: Vec::new() }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Spatial extents must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.specs.iter().filter(|s| s.kind == LayerKind::Conv && s.stride == 2).count()
    }

    pub fn forward(&mut self, x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let [_, c, h, w] = x.shape();
        let m = self.size_multiple();
        if c != 3 || h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(Error::shape(alloc::format!(
                "transfer input must be 3 x H x W with H, W multiples of {m}; got {:?}",
                x.shape()
            )));
        }
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h, record)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = dy;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g)
    }

    /// Parameter tensors in layer order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear);
    }

    /// Zeroes the weights and bias of the last convolution-type layer.
    pub fn zero_output_layer(&mut self) {
        if let Some(layer) = self
            .layers
            .iter_mut()
            .rev()
            .find(|l| matches!(l, Layer::Conv(_) | Layer::ConvTranspose(_)))
        {
            for p in layer.params_mut() {
                p.data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
}
