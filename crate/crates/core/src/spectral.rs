//! Forward half of the audio-to-image converter: STFT with a Gaussian window,
//! magnitude, dB rescaling against the peak, the denoising threshold mask and
//! the affine map onto `[0, 1]`. Also the weighted overlap-add inverse STFT.
//!
//! Grids are stored row-major with one row per frequency bin and one column
//! per frame.

// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::audio::AudioClip;
use crate::fft::RealFft;
use crate::{Error, Result};

/// dB value assigned to zero magnitudes and anything quieter.
pub const SILENCE_FLOOR_DB: f64 = -100.0;

/// Overlap-add normalization guard.
pub const WOLA_EPSILON: f64 = 1e-8;

/// Default denoising threshold.
pub const DEFAULT_LAMBDA: f64 = 0.618;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    /// Standard deviation of the Gaussian window, in samples.
    pub window_sigma: f64,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { n_fft: 2048, hop: 256, window_sigma: 256.0 }
    }
}

impl StftParams {
    /// Builds validated parameters with `sigma = n_fft / 8`.
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        let p = Self { n_fft, hop, window_sigma: n_fft as f64 / 8.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_power_of_two() {
            return Err(Error::param(alloc::format!("n_fft {} is not a power of two >= 2", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::param(alloc::format!("hop {} outside 1..={}", self.hop, self.n_fft)));
        }
        if !(self.window_sigma > 0.0) || !self.window_sigma.is_finite() {
            return Err(Error::param("window sigma must be positive"));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a clip of `len` samples (reflect-padded by `n_fft / 2`).
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Gaussian window centred on sample `n_fft / 2`.
    pub fn window(&self) -> Vec<f64> {
        let c = (self.n_fft / 2) as f64;
        (0..self.n_fft)
            .map(|n| {
                let z = (n as f64 - c) / self.window_sigma;
                (-0.5 * z * z).exp()
            })
            .collect()
    }
}

/// Row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(alloc::format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }
}

/// Facts about the analysed signal carried along every spectral intermediate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalInfo {
    pub sample_rate: u32,
    pub num_samples: usize,
    /// Max |x(n)| of the source clip.
    pub input_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub grid: Grid<Complex64>,
    pub params: StftParams,
    pub info: SignalInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub grid: Grid<f64>,
    pub params: StftParams,
    pub info: SignalInfo,
}

/// Spectrogram in dB relative to `peak_r`; every entry is `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DbSpectrogram {
    pub grid: Grid<f64>,
    pub peak_r: f64,
    pub params: StftParams,
    pub info: SignalInfo,
    /// Threshold used by the denoising mask, if one was applied.
    pub lambda: Option<f64>,
}

impl DbSpectrogram {
    pub fn min(&self) -> f64 {
        self.grid.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Single-channel spectral image with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub grid: Grid<f64>,
}

/// Everything the reconstructor needs to turn an image back into audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeta {
    pub peak_r: f64,
    pub floor_db: f64,
    pub lambda: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub window_sigma: f64,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub input_peak: f64,
}

impl SpectralMeta {
    pub fn params(&self) -> StftParams {
        StftParams { n_fft: self.n_fft, hop: self.hop, window_sigma: self.window_sigma }
    }

    pub fn info(&self) -> SignalInfo {
        SignalInfo {
            sample_rate: self.sample_rate,
            num_samples: self.num_samples,
            input_peak: self.input_peak,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if !(self.floor_db < 0.0) || !self.floor_db.is_finite() {
            return Err(Error::param(alloc::format!("floor_db {} must be negative", self.floor_db)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param(alloc::format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.peak_r > 0.0) || !self.peak_r.is_finite() {
            return Err(Error::param("peak_r must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(Error::param("sample_rate must be positive"));
        }
        if !(self.input_peak >= 0.0 && self.input_peak <= 1.0) {
            return Err(Error::param(alloc::format!("input_peak {} outside [0, 1]", self.input_peak)));
        }
        Ok(())
    }

    /// Image geometry `(bins, frames)` implied by the metadata.
    pub fn geometry(&self) -> (usize, usize) {
        let p = self.params();
        (p.bins(), p.frames_for(self.num_samples))
    }
}

/// Reusable STFT/ISTFT engine holding the window and FFT plan.
#[derive(Debug, Clone)]
pub struct Stft {
    params: StftParams,
    window: Vec<f64>,
    fft: RealFft,
    frame: Vec<f64>,
    bins: Vec<Complex64>,
}

impl Stft {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            window: params.window(),
            fft: RealFft::new(params.n_fft),
            frame: vec![0.0; params.n_fft],
            bins: vec![Complex64::default(); params.bins()],
        })
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    /// Reflect-pads by `n_fft / 2` on both ends (edge sample not repeated).
    pub fn reflect_pad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let half = self.params.n_fft / 2;
        if x.len() <= half {
            return Err(Error::ClipTooShort { len: x.len(), n_fft: self.params.n_fft });
        }
        let mut out = Vec::with_capacity(x.len() + 2 * half);
        out.extend((1..=half).rev().map(|i| x[i]));
        out.extend_from_slice(x);
        out.extend((0..half).map(|i| x[x.len() - 2 - i]));
        Ok(out)
    }

    /// Length of the padded domain spanned by `frames` frames.
    pub fn padded_len(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.params.hop + self.params.n_fft
    }

    /// Analyses `frames` frames of an already padded signal into `out`.
    pub fn analyze_padded(&mut self, padded: &[f64], out: &mut Grid<Complex64>) {
        let hop = self.params.hop;
        debug_assert_eq!(out.rows, self.params.bins());
        for m in 0..out.cols {
            let start = m * hop;
            for (i, f) in self.frame.iter_mut().enumerate() {
                *f = padded.get(start + i).copied().unwrap_or(0.0) * self.window[i];
            }
            self.fft.forward(&self.frame, &mut self.bins);
            for (k, &b) in self.bins.iter().enumerate() {
                out.data[k * out.cols + m] = b;
            }
        }
    }

    /// Least-squares overlap-add inverse in the padded domain:
    /// `x[t] = sum_m w y_m / sum_m w^2`.
    ///
    /// Samples outside `checked` whose window power is below
    /// [`WOLA_EPSILON`] are set to zero; inside `checked` they are an error.
    pub fn synthesize_padded(
        &mut self,
        spec: &Grid<Complex64>,
        checked: core::ops::Range<usize>,
    ) -> Result<Vec<f64>> {
        let (n, hop) = (self.params.n_fft, self.params.hop);
        let len = self.padded_len(spec.cols);
        let mut acc = vec![0.0; len];
        let mut power = vec![0.0; len];
        for m in 0..spec.cols {
            for (k, b) in self.bins.iter_mut().enumerate() {
                *b = spec.data[k * spec.cols + m];
            }
            self.fft.inverse(&self.bins, &mut self.frame);
            let start = m * hop;
            for i in 0..n {
                let w = self.window[i];
                acc[start + i] += w * self.frame[i];
                power[start + i] += w * w;
            }
        }
        for (t, (a, &p)) in acc.iter_mut().zip(&power).enumerate() {
            if p < WOLA_EPSILON {
                if checked.contains(&t) {
                    return Err(Error::DegenerateNormalization { index: t, power: p });
                }
                *a = 0.0;
            } else {
                *a /= p;
            }
        }
        Ok(acc)
    }
}

/// Short-time Fourier transform with reflect padding of `n_fft / 2`.
///
/// Produces `n_fft / 2 + 1` bins and `1 + len / hop` frames; frame `m` is
/// centred on sample `m * hop`.
pub fn stft(clip: &AudioClip, params: StftParams) -> Result<ComplexSpectrogram> {
    let mut engine = Stft::new(params)?;
    if clip.len() < params.n_fft {
        return Err(Error::ClipTooShort { len: clip.len(), n_fft: params.n_fft });
    }
    let padded = engine.reflect_pad(clip.samples())?;
    let frames = params.frames_for(clip.len());
    let mut grid = Grid::filled(params.bins(), frames, Complex64::default());
    engine.analyze_padded(&padded, &mut grid);
    Ok(ComplexSpectrogram {
        grid,
        params,
        info: SignalInfo {
            sample_rate: clip.sample_rate(),
            num_samples: clip.len(),
            input_peak: clip.peak(),
        },
    })
}

/// Weighted overlap-add inverse of [`stft`], returning `info.num_samples` samples.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    let mut engine = Stft::new(spec.params)?;
    if spec.grid.rows != spec.params.bins() {
        return Err(Error::shape(alloc::format!(
            "{} rows for n_fft {}",
            spec.grid.rows, spec.params.n_fft
        )));
    }
    let half = spec.params.n_fft / 2;
    let len = spec.info.num_samples;
    let avail = engine.padded_len(spec.grid.cols).saturating_sub(half);
    let padded = engine.synthesize_padded(&spec.grid, half..half + len.min(avail))?;
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        if let Some(&v) = padded.get(half + i) {
            *o = v;
        }
    }
    AudioClip::new(out, spec.info.sample_rate)
}

pub fn magnitude(spec: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram { grid: spec.grid.map(|c| c.norm()), params: spec.params, info: spec.info }
}

/// `20 log10(X / r)` with `r = max(X)`, clamped below at `floor_db`.
pub fn to_db_with_floor(mag: &MagnitudeSpectrogram, floor_db: f64) -> Result<DbSpectrogram> {
    let peak = mag.grid.data.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Silent("magnitude spectrogram is all zero"));
    }
    let grid = mag.grid.map(|&x| {
        if x > 0.0 {
            (20.0 * (x / peak).log10()).max(floor_db).min(0.0)
        } else {
            floor_db
        }
    });
    Ok(DbSpectrogram { grid, peak_r: peak, params: mag.params, info: mag.info, lambda: None })
}

/// [`to_db_with_floor`] at [`SILENCE_FLOOR_DB`].
pub fn to_db(mag: &MagnitudeSpectrogram) -> Result<DbSpectrogram> {
    to_db_with_floor(mag, SILENCE_FLOOR_DB)
}

/// Denoising threshold mask: entries below `lambda * min` are set to `min`.
pub fn denoise_mask(db: &DbSpectrogram, lambda: f64) -> Result<DbSpectrogram> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param(alloc::format!("lambda {lambda} outside [0, 1]")));
    }
    let min = db.min();
    let threshold = lambda * min;
    let grid = db.grid.map(|&v| if v < threshold { min } else { v });
    Ok(DbSpectrogram { grid, lambda: Some(lambda), ..db.clone() })
}

/// Affine map `[floor_db, 0] -> [0, 1]` with `floor_db = min(db)`.
pub fn normalize01(db: &DbSpectrogram) -> Result<(NormalizedImage, SpectralMeta)> {
    let floor_db = db.min();
    let max = db.grid.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(floor_db < max) || !(floor_db < 0.0) {
        return Err(Error::ConstantGrid);
    }
    let grid = db.grid.map(|&v| (1.0 - v / floor_db).clamp(0.0, 1.0));
    let meta = SpectralMeta {
        peak_r: db.peak_r,
        floor_db,
        lambda: db.lambda.unwrap_or(1.0),
        n_fft: db.params.n_fft,
        hop: db.params.hop,
        window_sigma: db.params.window_sigma,
        sample_rate: db.info.sample_rate,
        num_samples: db.info.num_samples,
        input_peak: db.info.input_peak,
    };
    Ok((NormalizedImage { grid }, meta))
}
