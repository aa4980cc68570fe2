//! Adam training of a transfer network against one fixed texture target.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{peak_normalize, AudioClip};
use crate::colormap::{Colormap, RgbImage};
use crate::loss::{
    total_loss, FeatureSet, LossNetConfig, LossNetwork, LossNormalization, LossParts,
    LossWeights, Objective, TextureTargets,
};
use crate::nn::{ArchConfig, Tensor, TransferModel};
use crate::pipeline::{audio2img, crop, images_to_tensor, ConvertParams};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Optimizer steps per epoch; `None` means one pass over the content set.
    pub steps_per_epoch: Option<usize>,
    pub weights: LossWeights,
    pub normalization: LossNormalization,
    pub seed: u64,
    /// Side of the square training patch.
    pub crop: usize,
    pub arch: ArchConfig,
    pub loss_net: LossNetConfig,
    pub convert: ConvertParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            steps_per_epoch: None,
            weights: LossWeights::default(),
            normalization: LossNormalization::Scaled,
            seed: 0,
            crop: 64,
            arch: ArchConfig::default(),
            loss_net: LossNetConfig::default(),
            convert: ConvertParams::default(),
        }
    }
}

impl TrainConfig {
    /// Batch 4, 200 steps in a single epoch, reduced widths.
    pub fn desk() -> Self {
        Self { epochs: 1, batch_size: 4, steps_per_epoch: Some(200), arch: ArchConfig::desk(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param("learning rate must be > 0"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::param("steps per epoch must be >= 1"));
        }
        if self.crop == 0 || self.crop % 4 != 0 {
            return Err(Error::param(alloc::format!("crop {} must be a positive multiple of 4", self.crop)));
        }
        self.weights.validate()?;
        self.convert.stft.validate()
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    pub fn for_params(params: &[&mut Tensor<T>]) -> Self {
        Self::new(params.iter().map(|p| p.numel()))
    }
}

/// One bias-corrected Adam update of every parameter from its gradient
/// accumulator. Parameters without a gradient are treated as zero-gradient.
pub fn adam_step<T: Real>(params: &mut [&mut Tensor<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if params.len() != state.m.len() || params.iter().zip(&state.m).any(|(p, m)| p.numel() != m.len()) {
        return Err(Error::shape("Adam state does not match parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::lit(1.0 - state.beta1.powi(t));
    let c2 = T::lit(1.0 - state.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(state.eps));
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let (data, grad) = p.data_and_grad_mut();
        for i in 0..data.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            data[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Gram targets of the texture clip, computed once for the whole run.
pub fn prepare_texture_targets(
    texture: &AudioClip,
    cm: &Colormap,
    cfg: &TrainConfig,
    net: &mut LossNetwork<f32>,
) -> Result<TextureTargets<f32>> {
    let converted = audio2img(texture, &cfg.convert, cm)?;
    image_texture_targets(&converted.image, net, cfg.normalization)
}

pub fn image_texture_targets<T: Real>(
    image: &RgbImage,
    net: &mut LossNetwork<T>,
    norm: LossNormalization,
) -> Result<TextureTargets<T>> {
    let x = images_to_tensor::<T>(&[image])?;
    let feats: FeatureSet<T> = net.forward(&x, false)?;
    Ok(TextureTargets::from_features(net, &feats, norm))
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based global iteration.
    pub iteration: usize,
    pub epoch: usize,
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
}

impl TrainLog {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }
}

/// Progress handed to the end-of-epoch hook.
pub struct EpochEnd<'a> {
    pub epoch: usize,
    pub iteration: usize,
    pub model: &'a mut TransferModel<f32>,
    pub adam: &'a AdamState<f32>,
    pub log: &'a TrainLog,
}

/// Trains `model` on random square crops of the content images.
pub fn train(
    model: &mut TransferModel<f32>,
    content: &[RgbImage],
    targets: &TextureTargets<f32>,
    net: &mut LossNetwork<f32>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(EpochEnd<'_>) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if content.is_empty() {
        return Err(Error::param("content set is empty"));
    }
    let c = cfg.crop;
    if c % model.size_multiple() != 0 {
        return Err(Error::param("crop is not compatible with the network strides"));
    }
    if let Some(small) = content.iter().find(|im| im.rows < c || im.cols < c) {
        return Err(Error::param(alloc::format!(
            "content image {}x{} is smaller than the {c}x{c} crop",
            small.rows, small.cols
        )));
    }
    let steps = cfg.steps_per_epoch.unwrap_or_else(|| content.len().div_ceil(cfg.batch_size));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut adam = AdamState::for_params(&model.params_mut());
    let mut log = TrainLog::default();
    let mut obj = Objective { net, targets, weights: cfg.weights, norm: cfg.normalization };
    let mut iteration = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..content.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for step in 0..steps {
            iteration += 1;
            let mut patches = Vec::with_capacity(cfg.batch_size);
            for k in 0..cfg.batch_size {
                let im = &content[order[(step * cfg.batch_size + k) % order.len()]];
                let r0 = rng.random_range(0..=im.rows - c);
                let c0 = rng.random_range(0..=im.cols - c);
                patches.push(crop(im, r0, c0, c, c)?);
            }
            let refs: Vec<&RgbImage> = patches.iter().collect();
            let x = images_to_tensor::<f32>(&refs)?;
            let content_feats = if cfg.weights.alpha > 0.0 { Some(obj.content_features(&x)?) } else { None };
            let y = model.forward(x, true)?;
            let (parts, dy) = obj.evaluate(&y, content_feats.as_ref())?;
            let total = total_loss(&parts, &obj.weights)?;
            if !dy.is_finite() {
                return Err(Error::NonFiniteLoss("gradient"));
            }
            model.zero_grad();
            model.backward(dy)?;
            adam_step(&mut model.params_mut(), &mut adam, cfg.learning_rate)?;
            log.records.push(LossRecord { iteration, epoch, parts, total });
        }
        on_epoch(EpochEnd { epoch, iteration, model, adam: &adam, log: &log })?;
    }
    Ok(log)
}

/// Seeded sine mixtures with note-like envelopes, for tests and demos.
pub fn synthetic_content(count: usize, duration_secs: f64, sample_rate: u32, seed: u64) -> Result<Vec<AudioClip>> {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::EmptyClip);
    }
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut x = vec![0.0; n];
            // About four notes per second, so most frames carry a note.
            let notes = 1 + (duration_secs * rng.random_range(3.0..5.0)) as usize;
            for _ in 0..notes {
                let f0 = 110.0 * Float::powf(2f64, rng.random_range(0.0..4.0));
                let amp = rng.random_range(0.2..1.0);
                let onset = rng.random_range(0..n);
                let len = ((rng.random_range(0.2..1.0) * sr) as usize).min(n - onset);
                let decay = rng.random_range(2.0..8.0);
                for (i, v) in x[onset..onset + len].iter_mut().enumerate() {
                    let t = i as f64 / sr;
                    let env = amp * Float::exp(-decay * t);
                    for h in 1..=8 {
                        *v += env / h as f64 * Float::sin(2.0 * PI * f0 * h as f64 * t);
                    }
                }
            }
            // A quiet drone keeps every clip non-silent.
            let drone = 55.0 * Float::powf(2f64, rng.random_range(0.0..2.0));
            for (i, v) in x.iter_mut().enumerate() {
                *v += 0.05 * Float::sin(2.0 * PI * drone * i as f64 / sr);
            }
            peak_normalize(&AudioClip::new(x, sample_rate)?, 0.9)
        })
        .collect()
}

/// A stationary grain texture: short Gaussian tone bursts at random times and
/// pitches over a low hum.
pub fn synthetic_texture(duration_secs: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::EmptyClip);
    }
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|i| 0.1 * Float::sin(2.0 * PI * 110.0 * i as f64 / sr)).collect();
    let grains = (duration_secs * 60.0) as usize;
    let half = (0.015 * sr) as isize;
    for _ in 0..grains {
        let centre = rng.random_range(0..n) as isize;
        let f = 800.0 * Float::powf(2f64, rng.random_range(0.0..2.0));
        let amp = rng.random_range(0.3..1.0);
        for d in -2 * half..=2 * half {
            let i = centre + d;
            if i < 0 || i as usize >= n {
                continue;
            }
            let t = d as f64 / half as f64;
            x[i as usize] += amp * Float::exp(-2.0 * t * t) * Float::sin(2.0 * PI * f * d as f64 / sr);
        }
    }
    peak_normalize(&AudioClip::new(x, sample_rate)?, 0.9)
}
