//! 8-bit RGB PNG storage of spectral images and the JSON metadata sidecar.
//!
//! Frequency runs along image rows with bin 0 on the bottom row; time runs
//! along columns, so a spectrogram of `bins x frames` is a PNG `frames` pixels
//! wide and `bins` pixels high.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use mtt_core::colormap::RgbImage;
use mtt_core::spectral::SpectralMeta;
use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    let (rows, cols) = (img.rows, img.cols);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let mut buf = vec![0u8; rows * cols * 3];
    for bin in 0..rows {
        let y = rows - 1 - bin;
        for t in 0..cols {
            let px = img.pixel(bin, t);
            let o = (y * cols + t) * 3;
            for c in 0..3 {
                buf[o + c] = to_u8(px[c]);
            }
        }
    }
    let png_err = |e: png::EncodingError| Error::Image { path: path.into(), reason: e.to_string() };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&buf).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Reads an 8-bit PNG (RGB, RGBA or grayscale) back into bin-major layout.
pub fn read_png(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let png_err = |e: png::DecodingError| Error::Image { path: path.into(), reason: e.to_string() };
    let mut dec = Decoder::new(BufReader::new(file));
    dec.set_transformations(Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image { path: path.into(), reason: "image too large".into() })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::Image { path: path.into(), reason: format!("{:?}-bit samples; expected 8", info.bit_depth) });
    }
    let stride = match info.color_type {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        other => return Err(Error::Image { path: path.into(), reason: format!("unsupported color type {other:?}") }),
    };
    let (cols, rows) = (info.width as usize, info.height as usize);
    let n = rows * cols;
    let mut data = vec![0.0f32; 3 * n];
    for y in 0..rows {
        let line = &buf[y * info.line_size..];
        let bin = rows - 1 - y;
        for t in 0..cols {
            let px = &line[t * stride..];
            for c in 0..3 {
                let v = if stride >= 3 { px[c] } else { px[0] };
                data[c * n + bin * cols + t] = v as f32 / 255.0;
            }
        }
    }
    Ok(RgbImage::new(rows, cols, data)?)
}

/// On-disk form of [`SpectralMeta`], plus the colormap name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub peak_r: f64,
    pub floor_db: f64,
    pub lambda: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub window_sigma: f64,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub input_peak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colormap: Option<String>,
}

impl Sidecar {
    pub fn new(meta: &SpectralMeta, colormap: Option<&str>) -> Self {
        Self {
            peak_r: meta.peak_r,
            floor_db: meta.floor_db,
            lambda: meta.lambda,
            n_fft: meta.n_fft,
            hop: meta.hop,
            window_sigma: meta.window_sigma,
            sample_rate: meta.sample_rate,
            num_samples: meta.num_samples,
            input_peak: meta.input_peak,
            colormap: colormap.map(str::to_owned),
        }
    }

    pub fn meta(&self) -> SpectralMeta {
        SpectralMeta {
            peak_r: self.peak_r,
            floor_db: self.floor_db,
            lambda: self.lambda,
            n_fft: self.n_fft,
            hop: self.hop,
            window_sigma: self.window_sigma,
            sample_rate: self.sample_rate,
            num_samples: self.num_samples,
            input_peak: self.input_peak,
        }
    }
}

pub fn write_sidecar(sidecar: &Sidecar, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Metadata { path: path.into(), reason: e.to_string() })
}

/// `image.png` -> `image.json`.
pub fn default_sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}
