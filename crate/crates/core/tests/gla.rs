//! Griffin-Lim convergence and the full audio -> image -> audio round trip.

use std::f64::consts::PI;

use mtt_core::audio::{pink_noise, AudioClip};
use mtt_core::colormap::Colormap;
use mtt_core::pipeline::{audio2img, ConvertParams};
use mtt_core::reconstruct::{griffin_lim, img2audio, GlaParams};
use mtt_core::spectral::{magnitude, stft, MagnitudeSpectrogram, StftParams};
use mtt_core::train::synthetic_content;

const RATE: u32 = 22_050;

fn sine_clip() -> AudioClip {
    AudioClip::new((0..2 * RATE as usize).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / RATE as f64).sin()).collect(), RATE)
        .unwrap()
}

fn mag_of(clip: &AudioClip) -> MagnitudeSpectrogram {
    magnitude(&stft(clip, StftParams::default()).unwrap())
}

fn fixtures() -> Vec<(&'static str, MagnitudeSpectrogram)> {
    vec![
        ("sine", mag_of(&sine_clip())),
        ("music", mag_of(&synthetic_content(1, 2.0, RATE, 5).unwrap()[0])),
        ("pink", mag_of(&pink_noise(2.0, RATE, 6).unwrap())),
    ]
}

/// Relative magnitude error after the best single gain on `b`. Output volume
/// is matched by peak, which a different phase can move, so the overall level
/// is not part of the comparison.
fn spectral_error(a: &AudioClip, b: &AudioClip) -> f64 {
    let (x, y) = (mag_of(a), mag_of(b));
    let xy: f64 = x.grid.data.iter().zip(&y.grid.data).map(|(p, q)| p * q).sum();
    let yy: f64 = y.grid.data.iter().map(|q| q * q).sum();
    let g = xy / yy;
    let num: f64 = x.grid.data.iter().zip(&y.grid.data).map(|(p, q)| (p - g * q).powi(2)).sum();
    let den: f64 = x.grid.data.iter().map(|p| p * p).sum();
    (num / den).sqrt()
}

#[test]
fn convergence_is_non_increasing_on_fixtures() {
    for (name, mag) in fixtures() {
        let params = GlaParams::new(60, 1, StftParams::default()).unwrap();
        let out = griffin_lim(&mag, &params).unwrap();
        let c = &out.convergence;
        for k in 1..c.len() {
            assert!(c[k] <= c[k - 1] + 1e-9, "{name}: c[{k}] = {} > c[{}] = {}", c[k], k - 1, c[k - 1]);
        }
        assert!(c[c.len() - 1] < c[0], "{name}");
    }
}

#[test]
fn more_iterations_help_on_the_sine() {
    let mag = mag_of(&sine_clip());
    let run = |n| *griffin_lim(&mag, &GlaParams::new(n, 3, StftParams::default()).unwrap()).unwrap().convergence.last().unwrap();
    let (c10, c100) = (run(10), run(100));
    assert!(c100 < c10, "{c100} vs {c10}");
}

#[test]
fn fixed_seed_is_bit_identical() {
    let mag = mag_of(&sine_clip());
    let params = GlaParams::new(5, 9, StftParams::default()).unwrap();
    let a = griffin_lim(&mag, &params).unwrap();
    let b = griffin_lim(&mag, &params).unwrap();
    assert_eq!(a.clip, b.clip);
    assert_eq!(a.convergence, b.convergence);
}

#[test]
fn round_trip_preserves_the_magnitude_spectrogram() {
    let clip = synthetic_content(1, 5.0, RATE, 8).unwrap().remove(0);
    let cm = Colormap::fire();
    let conv = audio2img(&clip, &ConvertParams::default(), &cm).unwrap();
    let gla = GlaParams::new(100, 0, StftParams::default()).unwrap();
    let out = img2audio(&conv.image, &conv.meta, &cm, &gla).unwrap();
    assert_eq!(out.clip.len(), clip.len());
    assert!((out.clip.peak() - clip.peak()).abs() < 1e-6);
    // Phase recovery alone bounds what the codec round trip can reach.
    let direct = griffin_lim(&mag_of(&clip), &gla).unwrap();
    let floor = spectral_error(&clip, &direct.clip);
    let err = spectral_error(&clip, &out.clip);
    assert!(err < floor + 0.05, "relative spectral error {err}, direct Griffin-Lim {floor}");
    assert!(err < 0.1, "relative spectral error {err}");

    let short = GlaParams::new(10, 0, StftParams::default()).unwrap();
    let out10 = img2audio(&conv.image, &conv.meta, &cm, &short).unwrap();
    assert!(out.convergence.last() < out10.convergence.last());
}
