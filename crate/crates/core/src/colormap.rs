//! Three-channel encoding of normalized spectral images and its inversion.
//!
//! Inversion follows the finite-difference scheme: every pixel's channel sum
//! is decremented step by step along the colormap's channel-sum sequence and
//! the pixel is assigned a level the first time its remainder goes negative,
//! after which the remainder is parked at the sentinel 3 so it is never
//! assigned again.

// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::spectral::{Grid, NormalizedImage};
use crate::{Error, Result};

/// Ascending list of RGB entries whose channel sums strictly increase.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    name: String,
    entries: Vec<[f64; 3]>,
}

impl Colormap {
    pub fn new(name: impl Into<String>, entries: Vec<[f64; 3]>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::MalformedColormap {
                line: entries.len(),
                reason: "a colormap needs at least two entries".to_string(),
            });
        }
        for (i, e) in entries.iter().enumerate() {
            for &v in e {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::ColormapRange { line: i + 1, value: v });
                }
            }
        }
        for i in 1..entries.len() {
            if sum(&entries[i]) <= sum(&entries[i - 1]) {
                return Err(Error::ColormapNotMonotone { index: i });
            }
        }
        Ok(Self { name: name.into(), entries })
    }

    /// Parses `r,g,b` rows. Blank lines and lines starting with `#` are skipped.
    pub fn parse_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::MalformedColormap {
                    line,
                    reason: alloc::format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut rgb = [0.0; 3];
            for (slot, f) in rgb.iter_mut().zip(&fields) {
                let v: f64 = f.parse().map_err(|_| Error::MalformedColormap {
                    line,
                    reason: alloc::format!("not a number: {f:?}"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::ColormapRange { line, value: v });
                }
                *slot = v;
            }
            entries.push(rgb);
        }
        Self::new(name, entries)
    }

    /// 256-entry grayscale ramp `(i/255, i/255, i/255)`.
    pub fn grayscale() -> Self {
        let entries = (0..256).map(|i| [i as f64 / 255.0; 3]).collect();
        Self::new("gray", entries).expect("grayscale ramp is valid")
    }

    /// 256-entry black-red-yellow-white ramp. Channels fill one after another
    /// so the channel sum is `3i/255`, and every value is a multiple of 1/255.
    pub fn fire() -> Self {
        let entries = (0..256)
            .map(|i| {
                let t: usize = 3 * i;
                let ch = |offset: usize| t.saturating_sub(offset).min(255) as f64 / 255.0;
                [ch(0), ch(255), ch(510)]
            })
            .collect();
        Self::new("fire", entries).expect("fire ramp is valid")
    }

    /// Looks up one of the embedded maps by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "gray" | "grey" | "grayscale" => Some(Self::grayscale()),
            "fire" => Some(Self::fire()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[[f64; 3]] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn channel_sums(&self) -> Vec<f64> {
        self.entries.iter().map(sum).collect()
    }

    /// Index of the entry nearest to `v * (N - 1)`.
    pub fn level_index(&self, v: f64) -> usize {
        let top = (self.entries.len() - 1) as f64;
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        libm_round(v * top) as usize
    }
}

fn sum(e: &[f64; 3]) -> f64 {
    e[0] + e[1] + e[2]
}

fn libm_round(x: f64) -> f64 {
    num_traits::Float::round(x)
}

/// Planar `3 x rows x cols` image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    /// Channel-major: all of R, then G, then B.
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * rows * cols {
            return Err(Error::shape(alloc::format!(
                "{} values for a 3x{rows}x{cols} image",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let n = self.rows * self.cols;
        let i = row * self.cols + col;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }
}

/// Nearest-entry quantization: `v` maps to entry `round(v (N - 1))`.
pub fn apply_colormap(img: &NormalizedImage, cm: &Colormap) -> RgbImage {
    let n = img.grid.data.len();
    let mut data = vec![0.0f32; 3 * n];
    for (i, &v) in img.grid.data.iter().enumerate() {
        let e = cm.entries[cm.level_index(v)];
        data[i] = e[0] as f32;
        data[n + i] = e[1] as f32;
        data[2 * n + i] = e[2] as f32;
    }
    RgbImage { rows: img.grid.rows, cols: img.grid.cols, data }
}

/// Sentinel parked in a pixel's remainder once it has been assigned.
const ASSIGNED: f64 = 3.0;

/// Recovers the single-channel image from a colormapped RGB image.
///
/// Channel sums are clamped into the map's range first. The decrement
/// sequence walks the midpoints between consecutive entry sums, so a pixel is
/// assigned the level of the entry nearest in channel sum; pixels that never
/// go negative keep the initial value 1.0.
pub fn rgb2sc(img: &RgbImage, cm: &Colormap) -> NormalizedImage {
    let sums = cm.channel_sums();
    let n_levels = sums.len();
    let top = (n_levels - 1) as f64;
    let (lo, hi) = (sums[0], sums[n_levels - 1]);

    let npx = img.rows * img.cols;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    // Remainder of each pixel's channel sum above the first entry.
    let mut remainder: Vec<f64> = (0..npx)
        .map(|i| (r[i] as f64 + g[i] as f64 + b[i] as f64).clamp(lo, hi) - lo)
        .collect();
    let mut out = vec![1.0f64; npx];
    let mut boundary = lo;
    for i in 0..n_levels - 1 {
        let next = 0.5 * (sums[i] + sums[i + 1]);
        let d = next - boundary;
        boundary = next;
        let level = i as f64 / top;
        for (rem, o) in remainder.iter_mut().zip(out.iter_mut()) {
            *rem -= d;
            if *rem < 0.0 {
                *o = level;
                *rem = ASSIGNED;
            }
        }
    }
    NormalizedImage { grid: Grid { rows: img.rows, cols: img.cols, data: out } }
}
