#![no_std]

//! Core numerics for music texture transfer.
//!
//! Audio is turned into a three-channel spectral image (`audio2img`), a
//! feed-forward convolutional network restyles that image so that its Gram
//! statistics match a target texture, and the image is turned back into audio
//! by colormap inversion, dB inversion and Griffin-Lim phase recovery
//! (`img2audio`).
//!
//! This crate depends only on `core` and `alloc`. File formats, the command
//! line and anything else touching the operating system live in the `mtt`
//! companion crate.

extern crate alloc;

pub mod audio;
pub mod colormap;
mod error;
pub mod fft;
pub mod loss;
pub mod nn;
pub mod pipeline;
mod real;
pub mod reconstruct;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;

/// Default working sample rate in Hz.
///
/// Inferred, not given by the source material: with `n_fft = 2048` and
/// `hop = 256` it is the rate at which a 10 s clip yields a 1025x862 image.
pub const DEFAULT_SAMPLE_RATE: u32 = 22_050;
