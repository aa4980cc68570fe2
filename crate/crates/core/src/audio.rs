//! Mono sample buffers, resampling, pink noise and level normalization.

// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::param(alloc::format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value, zero for an empty clip.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Copy of `len` samples starting at `start`, zero-filled past the end.
    pub fn window(&self, start: usize, len: usize) -> AudioClip {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let n = len.min(self.samples.len() - start);
            out[..n].copy_from_slice(&self.samples[start..start + n]);
        }
        AudioClip { samples: out, sample_rate: self.sample_rate }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(mut self, len: usize) -> AudioClip {
        self.samples.resize(len, 0.0);
        self
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Scales the clip so that its absolute peak equals `target_peak`.
pub fn peak_normalize(clip: &AudioClip, target_peak: f64) -> Result<AudioClip> {
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return Err(Error::param(alloc::format!("target peak {target_peak} outside (0, 1]")));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::Silent("cannot normalize an all-zero clip"));
    }
    if peak == target_peak {
        return Ok(clip.clone());
    }
    let gain = target_peak / peak;
    let samples = clip
        .samples
        .iter()
        .map(|&s| {
            // Pin the peak sample itself so rounding cannot overshoot the target.
            if s.abs() == peak {
                target_peak.copysign(s)
            } else {
                (s * gain).clamp(-target_peak, target_peak)
            }
        })
        .collect();
    Ok(AudioClip { samples, sample_rate: clip.sample_rate })
}

const HALF_TAPS: usize = 32;
const TAPS: usize = 2 * HALF_TAPS;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.92;
const MAX_TABLE_PHASES: u64 = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Taps for one fractional phase; tap `j` multiplies `x[n0 + j - HALF_TAPS + 1]`.
fn phase_taps(frac: f64, cutoff: f64) -> [f64; TAPS] {
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut taps = [0.0; TAPS];
    let mut sum = 0.0;
    for (j, tap) in taps.iter_mut().enumerate() {
        let t = j as f64 - (HALF_TAPS as f64 - 1.0) - frac;
        let r = t / HALF_TAPS as f64;
        let win = if r.abs() >= 1.0 {
            0.0
        } else {
            bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
        };
        let arg = 2.0 * cutoff * t;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
        *tap = 2.0 * cutoff * sinc * win;
        sum += *tap;
    }
    for tap in &mut taps {
        *tap /= sum;
    }
    taps
}

/// Band-limited rate conversion with a polyphase Kaiser-windowed sinc filter.
///
/// The output has `round(len * target / source)` samples.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::param("target rate must be positive"));
    }
    let src = clip.sample_rate as u64;
    let dst = target_rate as u64;
    if src == dst {
        return Ok(clip.clone());
    }
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let n_in = clip.len() as u64;
    let n_out = ((n_in * dst + src / 2) / src) as usize;
    let cutoff = 0.5 * ROLLOFF * (up as f64 / down as f64).min(1.0);

    let table: Option<Vec<[f64; TAPS]>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| phase_taps(p as f64 / up as f64, cutoff)).collect());

    let x = &clip.samples;
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out as u64 {
        let pos = k * down;
        let n0 = (pos / up) as i64;
        let phase = pos % up;
        let computed;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = phase_taps(phase as f64 / up as f64, cutoff);
                &computed
            }
        };
        let first = n0 - (HALF_TAPS as i64 - 1);
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            let idx = first + j as i64;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += h * x[idx as usize];
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate)
}

const PINK_ROWS: usize = 16;

/// Seeded pink noise (Voss-McCartney, 16 generator rows), peak-normalized to 0.9.
pub fn pink_noise(duration_secs: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    if !(duration_secs > 0.0) || !duration_secs.is_finite() {
        return Err(Error::param("duration must be positive"));
    }
    if sample_rate == 0 {
        return Err(Error::param("sample rate must be positive"));
    }
    let len = (duration_secs * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = [0.0f64; PINK_ROWS];
    for r in &mut rows {
        *r = rng.random_range(-1.0..1.0);
    }
    let mut running: f64 = rows.iter().sum();
    let mut samples = Vec::with_capacity(len);
    for i in 0..len as u64 {
        // Row k refreshes every 2^(k+1) samples.
        let row = (i + 1).trailing_zeros() as usize;
        if row < PINK_ROWS {
            let fresh = rng.random_range(-1.0..1.0);
            running += fresh - rows[row];
            rows[row] = fresh;
        }
        let white: f64 = rng.random_range(-1.0..1.0);
        samples.push(running + white);
    }
    let clip = AudioClip::new(samples, sample_rate)?;
    peak_normalize(&clip, 0.9)
}
