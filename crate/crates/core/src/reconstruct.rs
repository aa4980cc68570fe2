//! Image-to-audio reconstruction: colormap inversion, dB inversion,
//! Griffin-Lim phase recovery and volume matching.

// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{peak_normalize, AudioClip};
use crate::colormap::{rgb2sc, Colormap, RgbImage};
use crate::spectral::{
    DbSpectrogram, Grid, MagnitudeSpectrogram, NormalizedImage, SpectralMeta, Stft, StftParams,
};
use crate::{Error, Result};

/// Default Griffin-Lim iteration count.
pub const DEFAULT_GLA_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlaParams {
    pub iterations: usize,
    pub seed: u64,
    pub stft: StftParams,
}

impl GlaParams {
    pub fn new(iterations: usize, seed: u64, stft: StftParams) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::param("Griffin-Lim needs at least one iteration"));
        }
        stft.validate()?;
        Ok(Self { iterations, seed, stft })
    }
}

/// Inverse of [`crate::spectral::normalize01`]: `v -> floor_db (1 - v)`.
pub fn denormalize(img: &NormalizedImage, meta: &SpectralMeta) -> Result<DbSpectrogram> {
    if !(meta.floor_db < 0.0) {
        return Err(Error::param("floor_db must be negative"));
    }
    Ok(DbSpectrogram {
        grid: img.grid.map(|&v| meta.floor_db * (1.0 - v)),
        peak_r: meta.peak_r,
        params: meta.params(),
        info: meta.info(),
        lambda: Some(meta.lambda),
    })
}

/// Analytic inverse of the dB map: `peak_r * 10^(dB / 20)`.
pub fn from_db(db: &DbSpectrogram) -> MagnitudeSpectrogram {
    let r = db.peak_r;
    MagnitudeSpectrogram {
        grid: db.grid.map(|&v| r * 10f64.powf(v / 20.0)),
        params: db.params,
        info: db.info,
    }
}

/// Result of a Griffin-Lim run.
#[derive(Debug, Clone)]
pub struct GlaOutput {
    pub clip: AudioClip,
    /// `c_k = || |STFT(x_k)| - mag ||_F / ||mag||_F` after each iteration,
    /// measured over the full two-sided spectrum.
    pub convergence: Vec<f64>,
}

/// Two-sided Frobenius weight of bin `k`: interior bins stand for a
/// conjugate pair.
fn bin_weight(k: usize, bins: usize) -> f64 {
    if k == 0 || k == bins - 1 {
        1.0
    } else {
        2.0
    }
}

/// Griffin-Lim phase recovery from seeded uniform random phase.
///
/// Works in the reflect-padded domain throughout, so each round is an exact
/// least-squares projection and the convergence measure cannot increase. The
/// returned clip has `mag.info.num_samples` samples.
pub fn griffin_lim(mag: &MagnitudeSpectrogram, params: &GlaParams) -> Result<GlaOutput> {
    if params.iterations == 0 {
        return Err(Error::param("Griffin-Lim needs at least one iteration"));
    }
    let p = params.stft;
    if mag.grid.rows != p.bins() {
        return Err(Error::shape(alloc::format!(
            "magnitude has {} bins, n_fft {} needs {}",
            mag.grid.rows,
            p.n_fft,
            p.bins()
        )));
    }
    let mut engine = Stft::new(p)?;
    let (bins, frames) = (mag.grid.rows, mag.grid.cols);
    let half = p.n_fft / 2;
    let padded_len = engine.padded_len(frames);
    let len = mag.info.num_samples;
    let checked = half.min(padded_len)..(half + len).min(padded_len);

    let target_norm = {
        let mut s = 0.0;
        for k in 0..bins {
            let w = bin_weight(k, bins);
            for m in 0..frames {
                s += w * mag.grid.data[k * frames + m].powi(2);
            }
        }
        s.sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut spec = Grid {
        rows: bins,
        cols: frames,
        data: mag
            .grid
            .data
            .iter()
            .map(|&a| Complex64::from_polar(a, rng.random_range(-PI..PI)))
            .collect(),
    };
    let mut analysed = Grid::filled(bins, frames, Complex64::default());
    let mut convergence = Vec::with_capacity(params.iterations);
    let mut signal = vec![0.0; padded_len];
    for _ in 0..params.iterations {
        signal = engine.synthesize_padded(&spec, checked.clone())?;
        engine.analyze_padded(&signal, &mut analysed);
        let mut err = 0.0;
        for k in 0..bins {
            let w = bin_weight(k, bins);
            for m in 0..frames {
                let i = k * frames + m;
                let a = mag.grid.data[i];
                let z = analysed.data[i];
                let r = z.norm();
                err += w * (r - a).powi(2);
                spec.data[i] = if r > 0.0 { z * (a / r) } else { Complex64::new(a, 0.0) };
            }
        }
        convergence.push(if target_norm > 0.0 { err.sqrt() / target_norm } else { 0.0 });
    }
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        if let Some(&v) = signal.get(half + i) {
            *o = v;
        }
    }
    Ok(GlaOutput { clip: AudioClip::new(out, mag.info.sample_rate)?, convergence })
}

/// Full reconstructor: `rgb2sc -> denormalize -> from_db -> griffin_lim ->
/// trim -> peak_normalize(input_peak)`.
pub fn img2audio(
    img: &RgbImage,
    meta: &SpectralMeta,
    cm: &Colormap,
    gla: &GlaParams,
) -> Result<GlaOutput> {
    meta.validate()?;
    let (bins, frames) = meta.geometry();
    if (img.rows, img.cols) != (bins, frames) {
        return Err(Error::shape(alloc::format!(
            "image is {}x{} but metadata implies {bins}x{frames}",
            img.rows, img.cols
        )));
    }
    let single = rgb2sc(img, cm);
    let db = denormalize(&single, meta)?;
    let mag = from_db(&db);
    let mut params = *gla;
    params.stft = meta.params();
    let out = griffin_lim(&mag, &params)?;
    let clip = out.clip.fit_to_len(meta.num_samples);
    let clip = if meta.input_peak > 0.0 {
        peak_normalize(&clip, meta.input_peak)?
    } else {
        clip
    };
    Ok(GlaOutput { clip, convergence: out.convergence })
}
