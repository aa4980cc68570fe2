//! End-to-end converter and the image/tensor plumbing around the network.

use alloc::vec::Vec;

use crate::audio::AudioClip;
use crate::colormap::{apply_colormap, Colormap, RgbImage};
use crate::nn::{Tensor, TransferModel};
use crate::spectral::{
    denoise_mask, magnitude, normalize01, stft, to_db, NormalizedImage, SpectralMeta, StftParams,
    DEFAULT_LAMBDA,
};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvertParams {
    pub stft: StftParams,
    pub lambda: f64,
}

impl Default for ConvertParams {
    fn default() -> Self {
        Self { stft: StftParams::default(), lambda: DEFAULT_LAMBDA }
    }
}

/// Output of [`audio2img`].
#[derive(Debug, Clone)]
pub struct Converted {
    pub image: RgbImage,
    pub normalized: NormalizedImage,
    pub meta: SpectralMeta,
}

/// `stft -> magnitude -> dB -> denoising mask -> [0, 1] -> colormap`.
pub fn audio2img(clip: &AudioClip, params: &ConvertParams, cm: &Colormap) -> Result<Converted> {
    let spec = stft(clip, params.stft)?;
    let db = to_db(&magnitude(&spec))?;
    let masked = denoise_mask(&db, params.lambda)?;
    let (normalized, meta) = normalize01(&masked)?;
    let image = apply_colormap(&normalized, cm);
    Ok(Converted { image, normalized, meta })
}

/// Packs RGB images of equal geometry into an `N x 3 x rows x cols` tensor.
pub fn images_to_tensor<T: Real>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::shape("no images"))?;
    let (rows, cols) = (first.rows, first.cols);
    let mut data = Vec::with_capacity(images.len() * 3 * rows * cols);
    for img in images {
        if (img.rows, img.cols) != (rows, cols) {
            return Err(Error::shape("images differ in geometry"));
        }
        data.extend(img.data.iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::from_vec([images.len(), 3, rows, cols], data)
}

/// Unpacks batch item `n` of a 3-channel tensor, clamping into `[0, 1]`.
pub fn tensor_to_image<T: Real>(t: &Tensor<T>, n: usize) -> Result<RgbImage> {
    let [batch, c, h, w] = t.shape();
    if c != 3 || n >= batch {
        return Err(Error::shape("expected a 3-channel tensor"));
    }
    let data = t.item(n).iter().map(|v| v.to_f64_lossy().clamp(0.0, 1.0) as f32).collect();
    RgbImage::new(h, w, data)
}

/// Reflect-pads rows and columns up to the next multiples of `multiple`.
pub fn pad_to_multiple(img: &RgbImage, multiple: usize) -> RgbImage {
    let rows = img.rows.div_ceil(multiple) * multiple;
    let cols = img.cols.div_ceil(multiple) * multiple;
    if (rows, cols) == (img.rows, img.cols) {
        return img.clone();
    }
    let reflect = |i: usize, n: usize| -> usize {
        if i < n {
            i
        } else if n > 1 {
            // Mirror about the last index without repeating it.
            let over = i - (n - 1);
            (n - 1).saturating_sub(over % (2 * (n - 1)))
        } else {
            0
        }
    };
    let mut data = Vec::with_capacity(3 * rows * cols);
    for c in 0..3 {
        let plane = img.plane(c);
        for r in 0..rows {
            let sr = reflect(r, img.rows);
            for q in 0..cols {
                data.push(plane[sr * img.cols + reflect(q, img.cols)]);
            }
        }
    }
    RgbImage { rows, cols, data }
}

/// Runs the network on a whole spectral image: reflect-pads both axes to the
/// network's size multiple, applies the model and crops back.
pub fn transfer_image(model: &mut TransferModel<f32>, img: &RgbImage) -> Result<RgbImage> {
    let padded = pad_to_multiple(img, model.size_multiple());
    let x = images_to_tensor::<f32>(&[&padded])?;
    let y = model.forward(x, false)?;
    let out = tensor_to_image(&y, 0)?;
    crop(&out, 0, 0, img.rows, img.cols)
}

/// Top-left `rows x cols` crop.
pub fn crop(img: &RgbImage, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<RgbImage> {
    if row0 + rows > img.rows || col0 + cols > img.cols {
        return Err(Error::shape("crop outside image"));
    }
    let mut data = Vec::with_capacity(3 * rows * cols);
    for c in 0..3 {
        let plane = img.plane(c);
        for r in row0..row0 + rows {
            data.extend_from_slice(&plane[r * img.cols + col0..r * img.cols + col0 + cols]);
        }
    }
    RgbImage::new(rows, cols, data)
}
