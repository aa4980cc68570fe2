//! Content, texture (Gram) and total-variation losses over the activations
//! of a fixed random-weight convolutional loss network.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Conv2d, Relu, Tensor};
use crate::real::{gemm, MatRef};
use crate::{Error, Real, Result};

/// Weights of the content, texture and total-variation terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 7.5, beta: 500.0, gamma: 200.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(alloc::format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// How loss terms are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossNormalization {
    /// Plain sums: `1/2 sum (F - P)^2`, `G = X X^T`, `1/2 sum_l sum (G - A)^2`,
    /// summed squared differences for TV.
    Literal,
    /// Gram divided by `channels * positions`, texture terms averaged over
    /// layers, content and TV divided by their element counts.
    #[default]
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub content: f64,
    pub texture: f64,
    pub tv: f64,
}

/// `alpha * content + beta * texture + gamma * tv`, rejecting non-finite terms.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("content", parts.content), ("texture", parts.texture), ("tv", parts.tv)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(name));
        }
    }
    Ok(w.alpha * parts.content + w.beta * parts.texture + w.gamma * parts.tv)
}

/// Gram matrix `scale * X X^T` of a `channels x positions` feature block.
/// Exactly symmetric.
pub fn gram_matrix<T: Real>(features: &[T], channels: usize, positions: usize, scale: T) -> Vec<T> {
    let mut g = vec![T::zero(); channels * channels];
    let x = MatRef::new(&features[..channels * positions], channels, positions);
    gemm(scale, x, x.t(), T::zero(), &mut g, channels);
    for i in 0..channels {
        for j in 0..i {
            g[i * channels + j] = g[j * channels + i];
        }
    }
    g
}

/// Per-item Gram matrices of a feature tensor.
pub fn grams<T: Real>(features: &Tensor<T>, norm: LossNormalization) -> Vec<Vec<T>> {
    let [n, c, h, w] = features.shape();
    let m = h * w;
    let scale = match norm {
        LossNormalization::Literal => T::one(),
        LossNormalization::Scaled => T::one() / T::lit((c * m) as f64),
    };
    (0..n).map(|b| gram_matrix(features.item(b), c, m, scale)).collect()
}

/// `1/2 sum (F - P)^2`.
pub fn content_loss<T: Real>(f: &Tensor<T>, p: &Tensor<T>) -> Result<T> {
    f.same_shape(p, "content loss")?;
    Ok(T::lit(0.5) * f.data().iter().zip(p.data()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>())
}

/// `1/2 sum_l sum_ij (G^l - A^l)^2`.
pub fn texture_loss<T: Real>(g_set: &[Vec<T>], a_set: &[Vec<T>]) -> Result<T> {
    if g_set.len() != a_set.len() {
        return Err(Error::shape(alloc::format!(
            "{} generated layers vs {} target layers",
            g_set.len(),
            a_set.len()
        )));
    }
    let mut sum = T::zero();
    for (g, a) in g_set.iter().zip(a_set) {
        if g.len() != a.len() {
            return Err(Error::shape("Gram matrices differ in size"));
        }
        sum += g.iter().zip(a).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>();
    }
    Ok(T::lit(0.5) * sum)
}

/// Anisotropic squared total variation, summed over batch and channels.
pub fn tv_loss<T: Real>(img: &Tensor<T>) -> T {
    tv_with_grad(img, None)
}

fn tv_with_grad<T: Real>(img: &Tensor<T>, mut grad: Option<(&mut [T], T)>) -> T {
    let [n, c, h, w] = img.shape();
    let x = img.data();
    let mut sum = T::zero();
    let two = T::lit(2.0);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..h {
            for j in 0..w {
                let at = base + i * w + j;
                if i + 1 < h {
                    let d = x[at + w] - x[at];
                    sum += d * d;
                    if let Some((g, s)) = grad.as_mut() {
                        g[at + w] += two * d * *s;
                        g[at] -= two * d * *s;
                    }
                }
                if j + 1 < w {
                    let d = x[at + 1] - x[at];
                    sum += d * d;
                    if let Some((g, s)) = grad.as_mut() {
                        g[at + 1] += two * d * *s;
                        g[at] -= two * d * *s;
                    }
                }
            }
        }
    }
    sum
}

/// Frozen stack of stride-2 3x3 convolutions with ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNetConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
    /// 1-based index of the content layer.
    pub content_layer: usize,
    /// 1-based, strictly increasing indices of the texture layers.
    pub texture_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for LossNetConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 64, 128], kernel: 3, content_layer: 2, texture_layers: vec![1, 2, 3, 4], seed: 0x5eed }
    }
}

/// Per-layer activations, index 0 holding layer 1.
#[derive(Debug, Clone)]
pub struct FeatureSet<T> {
    pub layers: Vec<Tensor<T>>,
}

impl<T: Real> FeatureSet<T> {
    /// Activations of 1-based layer `l`.
    pub fn layer(&self, l: usize) -> &Tensor<T> {
        &self.layers[l - 1]
    }
}

#[derive(Debug, Clone)]
pub struct LossNetwork<T> {
    convs: Vec<Conv2d<T>>,
    relus: Vec<Relu<T>>,
    config: LossNetConfig,
}

impl<T: Real> LossNetwork<T> {
    pub fn new(config: LossNetConfig) -> Result<Self> {
        let depth = config.widths.len();
        if depth == 0 || config.kernel % 2 == 0 {
            return Err(Error::param("loss network needs layers and an odd kernel"));
        }
        if !(1..=depth).contains(&config.content_layer) {
            return Err(Error::param("content layer out of range"));
        }
        if config.texture_layers.is_empty()
            || config.texture_layers.windows(2).any(|p| p[0] >= p[1])
            || config.texture_layers.iter().any(|&l| !(1..=depth).contains(&l))
        {
            return Err(Error::param("texture layers must be strictly increasing and in range"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let k = config.kernel;
        let mut convs = Vec::with_capacity(depth);
        let mut cin = 3;
        for &cout in &config.widths {
            let w = crate::nn::kaiming(&mut rng, [cout, cin, k, k], cin * k * k);
            let b = Tensor::zeros([cout, 1, 1, 1]);
            let mut conv = Conv2d::new(w, b, 2, k / 2)?;
            conv.frozen = true;
            convs.push(conv);
            cin = cout;
        }
        Ok(Self { relus: (0..depth).map(|_| Relu::new()).collect(), convs, config })
    }

    pub fn config(&self) -> &LossNetConfig {
        &self.config
    }

    pub fn clear(&mut self) {
        self.convs.iter_mut().for_each(Conv2d::clear);
        self.relus.iter_mut().for_each(Relu::clear);
    }

    pub fn depth(&self) -> usize {
        self.convs.len()
    }

    /// Runs the network, returning every layer's post-ReLU activations.
    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<FeatureSet<T>> {
        let mut layers = Vec::with_capacity(self.depth());
        let mut h = x.clone();
        for (conv, relu) in self.convs.iter_mut().zip(&mut self.relus) {
            h = conv.forward(h, record)?;
            h = relu.forward(h, record)?;
            layers.push(h.clone());
        }
        Ok(FeatureSet { layers })
    }

    /// Backpropagates per-layer activation gradients (index 0 = layer 1) to the input.
    pub fn backward(&mut self, mut grads: Vec<Option<Tensor<T>>>) -> Result<Tensor<T>> {
        if grads.len() != self.depth() {
            return Err(Error::shape("one gradient slot per loss-network layer"));
        }
        let mut carry: Option<Tensor<T>> = None;
        for l in (0..self.depth()).rev() {
            let g = match (carry.take(), grads[l].take()) {
                (Some(mut a), Some(b)) => {
                    a.add_assign(&b);
                    a
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => {
                    // Nothing reaches this layer; drop its cache.
                    self.relus[l].clear();
                    self.convs[l].clear();
                    continue;
                }
            };
            let g = self.relus[l].backward(g)?;
            carry = Some(self.convs[l].backward(g)?);
        }
        carry.ok_or_else(|| Error::param("no loss gradient reached the input"))
    }
}

/// Cached Gram targets of the texture spectrum, one `C x C` matrix per texture layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureTargets<T> {
    pub layers: Vec<usize>,
    pub grams: Vec<Vec<T>>,
}

impl<T: Real> TextureTargets<T> {
    /// Grams of a single-image feature set at the network's texture layers.
    pub fn from_features(net: &LossNetwork<T>, features: &FeatureSet<T>, norm: LossNormalization) -> Self {
        let layers = net.config().texture_layers.clone();
        let grams = layers.iter().map(|&l| grams(features.layer(l), norm).swap_remove(0)).collect();
        Self { layers, grams }
    }

    /// Relative Frobenius distance to another target set.
    pub fn relative_distance(&self, other: &Self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.grams.iter().zip(&other.grams) {
            for (&x, &y) in a.iter().zip(b) {
                let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
                num += (x - y) * (x - y);
                den += x * x;
            }
        }
        if den == 0.0 {
            Float::sqrt(num)
        } else {
            Float::sqrt(num / den)
        }
    }
}

/// Scaled-or-literal texture loss of single images against fixed targets,
/// without recording anything for backpropagation.
pub fn texture_distance<T: Real>(
    net: &mut LossNetwork<T>,
    targets: &TextureTargets<T>,
    image: &Tensor<T>,
    norm: LossNormalization,
) -> Result<f64> {
    let feats = net.forward(image, false)?;
    let g: Vec<Vec<T>> = targets.layers.iter().map(|&l| grams(feats.layer(l), norm).swap_remove(0)).collect();
    let raw = texture_loss(&g, &targets.grams)?.to_f64_lossy();
    Ok(match norm {
        LossNormalization::Literal => raw,
        LossNormalization::Scaled => raw / targets.layers.len() as f64,
    })
}

/// Content loss between two single images at the network's content layer,
/// scaled like the training objective.
pub fn content_distance<T: Real>(
    net: &mut LossNetwork<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    norm: LossNormalization,
) -> Result<f64> {
    let l = net.config().content_layer;
    let fa = net.forward(a, false)?.layers.swap_remove(l - 1);
    let fb = net.forward(b, false)?.layers.swap_remove(l - 1);
    let raw = content_loss(&fa, &fb)?.to_f64_lossy();
    Ok(match norm {
        LossNormalization::Literal => raw,
        LossNormalization::Scaled => raw / fa.numel() as f64,
    })
}

/// The differentiable training objective over a loss network.
pub struct Objective<'a, T> {
    pub net: &'a mut LossNetwork<T>,
    pub targets: &'a TextureTargets<T>,
    pub weights: LossWeights,
    pub norm: LossNormalization,
}

impl<T: Real> Objective<'_, T> {
    /// Content-layer activations of the content images (no recording).
    pub fn content_features(&mut self, content: &Tensor<T>) -> Result<Tensor<T>> {
        let l = self.net.config().content_layer;
        let mut f = self.net.forward(content, false)?;
        Ok(f.layers.swap_remove(l - 1))
    }

    /// Loss parts of `generated` and the gradient of the weighted total with
    /// respect to it. The content term is zero when no content features are given.
    pub fn evaluate(
        &mut self,
        generated: &Tensor<T>,
        content: Option<&Tensor<T>>,
    ) -> Result<(LossParts, Tensor<T>)> {
        let [n, _, _, _] = generated.shape();
        let feats = self.net.forward(generated, true)?;
        let depth = self.net.depth();
        let mut grads: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        let mut parts = LossParts::default();
        let inv_n = T::one() / T::lit(n as f64);

        if let Some(p) = content {
            let l = self.net.config().content_layer;
            let f = feats.layer(l);
            f.same_shape(p, "content features")?;
            let s = match self.norm {
                LossNormalization::Literal => inv_n,
                LossNormalization::Scaled => T::one() / T::lit(f.numel() as f64),
            };
            parts.content = (content_loss(f, p)? * s).to_f64_lossy();
            let a = T::lit(self.weights.alpha) * s;
            let g: Vec<T> = f.data().iter().zip(p.data()).map(|(&x, &y)| a * (x - y)).collect();
            grads[l - 1] = Some(Tensor::from_vec(f.shape(), g)?);
        }

        {
            let n_layers = self.targets.layers.len();
            let layer_scale = match self.norm {
                LossNormalization::Literal => T::one(),
                LossNormalization::Scaled => T::one() / T::lit(n_layers as f64),
            };
            let mut total = T::zero();
            for (&l, target) in self.targets.layers.iter().zip(&self.targets.grams) {
                let x = feats.layer(l);
                let [_, c, h, w] = x.shape();
                let m = h * w;
                if target.len() != c * c {
                    return Err(Error::shape("texture target does not match loss network"));
                }
                let kappa = match self.norm {
                    LossNormalization::Literal => T::one(),
                    LossNormalization::Scaled => T::one() / T::lit((c * m) as f64),
                };
                let gs = grams(x, self.norm);
                let mut gx = Tensor::zeros(x.shape());
                let coeff = T::lit(self.weights.beta) * layer_scale * inv_n * kappa * T::lit(2.0);
                for (b, g) in gs.iter().enumerate() {
                    let diff: Vec<T> = g.iter().zip(target).map(|(&p, &q)| p - q).collect();
                    total += T::lit(0.5) * diff.iter().map(|&d| d * d).sum::<T>();
                    gemm(
                        coeff,
                        MatRef::new(&diff, c, c),
                        MatRef::new(x.item(b), c, m),
                        T::zero(),
                        gx.item_mut(b),
                        m,
                    );
                }
                match &mut grads[l - 1] {
                    Some(existing) => existing.add_assign(&gx),
                    slot => *slot = Some(gx),
                }
            }
            parts.texture = (total * layer_scale * inv_n).to_f64_lossy();
        }

        let mut dimg = if grads.iter().any(Option::is_some) {
            self.net.backward(grads)?
        } else {
            self.net.clear();
            Tensor::zeros(generated.shape())
        };

        let tv_scale = match self.norm {
            LossNormalization::Literal => inv_n,
            LossNormalization::Scaled => T::one() / T::lit(generated.numel() as f64),
        };
        let g = T::lit(self.weights.gamma) * tv_scale;
        parts.tv = (tv_with_grad(generated, Some((dimg.data_mut(), g))) * tv_scale).to_f64_lossy();

        total_loss(&parts, &self.weights)?;
        Ok((parts, dimg))
    }
}
