//! WAV input (PCM16 or float32, mono or stereo) and float32 mono output.

use std::io;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use mtt_core::audio::AudioClip;

use crate::error::{Error, Result};

fn hound_error(path: &Path, e: hound::Error) -> Error {
    let path = path.to_path_buf();
    match e {
        hound::Error::IoError(source) if source.kind() == io::ErrorKind::UnexpectedEof => {
            Error::MalformedWav { path, reason: "file ends early".into() }
        }
        hound::Error::IoError(source) => Error::Io { path, source },
        hound::Error::FormatError(reason) => Error::MalformedWav { path, reason: reason.into() },
        hound::Error::Unsupported => Error::UnsupportedWav { path, reason: "format not understood".into() },
        other => Error::MalformedWav { path, reason: other.to_string() },
    }
}

/// Reads a WAV file, averaging stereo to mono and scaling to `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels != 1 && channels != 2 {
        return Err(Error::UnsupportedWav { path: path.into(), reason: format!("{channels} channels") });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedWav {
                path: path.into(),
                reason: format!("{bits}-bit {format:?}; expected 16-bit PCM or 32-bit float"),
            })
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::MalformedWav { path: path.into(), reason: "partial sample frame".into() });
    }
    let mono = interleaved.chunks_exact(channels).map(|f| f.iter().sum::<f64>() / channels as f64).collect();
    Ok(AudioClip::new(mono, spec.sample_rate)?)
}

/// Writes a float32 mono WAV.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    if clip.is_empty() {
        return Err(Error::Invalid("refusing to write an empty clip".into()));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in clip.samples() {
        writer.write_sample(s as f32).map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}
