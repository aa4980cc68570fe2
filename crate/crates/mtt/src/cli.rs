//! The `mtt` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtt_core::audio::{pink_noise, resample, AudioClip};
use mtt_core::colormap::{Colormap, RgbImage};
use mtt_core::loss::{content_distance, texture_distance, LossNetwork, LossWeights};
use mtt_core::nn::{ArchConfig, TransferModel};
use mtt_core::pipeline::{audio2img, images_to_tensor, transfer_image, ConvertParams};
use mtt_core::reconstruct::{img2audio, GlaParams, DEFAULT_GLA_ITERATIONS};
use mtt_core::spectral::{SpectralMeta, StftParams, DEFAULT_LAMBDA};
use mtt_core::train::{image_texture_targets, prepare_texture_targets, synthetic_content, train, TrainConfig};
use mtt_core::DEFAULT_SAMPLE_RATE;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::files::{
    load_colormap, load_model, save_model, write_bench_csv, write_checkpoint, write_loss_log, BenchRow,
    TrainState,
};
use crate::image::{default_sidecar_path, read_png, read_sidecar, write_png, write_sidecar, Sidecar};
use crate::memory;
use crate::wav::{read_wav, write_wav};

/// Reference figures for one transfer task on a 1-core, 4 GB server.
pub const REFERENCE_SECONDS: f64 = 30.84;
pub const REFERENCE_PEAK_MB: f64 = 213.0;

#[derive(Debug, Parser)]
#[command(name = "mtt", version, about = "Music texture transfer through spectral images")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Working sample rate; inputs are resampled to it.
    #[arg(long, global = true, default_value_t = DEFAULT_SAMPLE_RATE)]
    pub sample_rate: u32,
    #[arg(long, global = true, default_value_t = 2048)]
    pub n_fft: usize,
    #[arg(long, global = true, default_value_t = 256)]
    pub hop: usize,
    /// Denoising threshold in [0, 1].
    #[arg(long, global = true, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Built-in map (gray, fire) or an r,g,b CSV file.
    #[arg(long, global = true, default_value = "gray")]
    pub colormap: String,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Bit-identical output for identical inputs. Numeric code is
    /// single-threaded, so this is always the case; the flag is accepted for
    /// scripts that request it explicitly.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Batch 16, 10 epochs, widths 32/64/128.
    Full,
    /// Batch 4, one epoch of 200 steps, widths 16/32/64.
    Desk,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audio to spectral PNG plus JSON metadata.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Defaults to the PNG path with a .json extension.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Spectral PNG plus metadata back to audio.
    Reconstruct {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GLA_ITERATIONS)]
        gla_iters: usize,
    },
    /// Applies a trained texture model to a content clip.
    Transfer {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GLA_ITERATIONS)]
        gla_iters: usize,
    },
    /// Trains a texture model.
    Train(TrainArgs),
    /// Synthesizes texture from pink noise with a content-free model.
    Synth {
        #[arg(long)]
        texture: PathBuf,
        /// Output length in seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        output: PathBuf,
        #[arg(long, conflicts_with = "train_inline")]
        model: Option<PathBuf>,
        /// Train a content-free model on the spot.
        #[arg(long)]
        train_inline: bool,
        /// Optimizer steps for inline training.
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_GLA_ITERATIONS)]
        gla_iters: usize,
    },
    /// Times full transfers of every WAV in a directory.
    Bench {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to a freshly initialized desk-scale model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV report path; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GLA_ITERATIONS)]
        gla_iters: usize,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of content WAV or PNG files.
    #[arg(long, required_unless_present = "synthetic")]
    pub content_dir: Option<PathBuf>,
    /// Use this many generated sine-mixture clips as content instead.
    #[arg(long, conflicts_with = "content_dir")]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub texture: PathBuf,
    /// Model output; also rewritten as a checkpoint after every epoch.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Optimizer steps per epoch.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub crop: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// CSV loss log path.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

/// Validated global settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub sample_rate: u32,
    pub convert: ConvertParams,
    pub colormap: String,
    pub seed: u64,
}

impl GlobalOpts {
    pub fn validate(&self) -> Result<Settings> {
        if self.sample_rate == 0 {
            return Err(Error::Invalid("--sample-rate must be positive".into()));
        }
        let stft = StftParams::new(self.n_fft, self.hop)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Invalid(format!("--lambda {} outside [0, 1]", self.lambda)));
        }
        if self.colormap.is_empty() {
            return Err(Error::Invalid("--colormap is empty".into()));
        }
        Ok(Settings {
            sample_rate: self.sample_rate,
            convert: ConvertParams { stft, lambda: self.lambda },
            colormap: self.colormap.clone(),
            seed: self.seed,
        })
    }
}

fn gla(iterations: usize, seed: u64, s: &Settings) -> Result<GlaParams> {
    Ok(GlaParams::new(iterations, seed, s.convert.stft)?)
}

impl TrainArgs {
    pub fn config(&self, s: &Settings) -> Result<TrainConfig> {
        let mut cfg = match self.preset {
            Preset::Full => TrainConfig::default(),
            Preset::Desk => TrainConfig::desk(),
        };
        cfg.seed = s.seed;
        cfg.convert = s.convert;
        cfg.crop = self.crop;
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if self.iterations.is_some() {
            cfg.steps_per_epoch = self.iterations;
        }
        let d = LossWeights::default();
        cfg.weights = LossWeights {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
        };
        cfg.validate()?;
        if self.synthetic == Some(0) {
            return Err(Error::Invalid("--synthetic needs at least one clip".into()));
        }
        Ok(cfg)
    }
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let s = cli.global.validate()?;
    match cli.command {
        Command::Convert { input, output, meta } => cmd_convert(&s, &input, &output, meta.as_deref()),
        Command::Reconstruct { input, output, meta, gla_iters } => {
            let g = gla(gla_iters, s.seed, &s)?;
            cmd_reconstruct(&s, &input, &output, meta.as_deref(), &g)
        }
        Command::Transfer { input, output, model, gla_iters } => {
            let g = gla(gla_iters, s.seed, &s)?;
            cmd_transfer(&s, &input, &output, &model, &g)
        }
        Command::Train(args) => {
            let cfg = args.config(&s)?;
            cmd_train(&s, &args, &cfg)
        }
        Command::Synth { texture, duration, output, model, train_inline, iterations, gla_iters } => {
            let g = gla(gla_iters, s.seed, &s)?;
            if !(duration > 0.0) || !duration.is_finite() {
                return Err(Error::Invalid(format!("--duration {duration} must be positive")));
            }
            if model.is_none() && !train_inline {
                return Err(Error::Invalid("synth needs --model or --train-inline".into()));
            }
            if iterations == 0 {
                return Err(Error::Invalid("--iterations must be >= 1".into()));
            }
            let source = match model {
                Some(p) => ModelSource::File(p),
                None => ModelSource::Inline { iterations },
            };
            cmd_synth(&s, &texture, duration, &output, source, &g).map(|_| ())
        }
        Command::Bench { input, model, output, gla_iters } => {
            let g = gla(gla_iters, s.seed, &s)?;
            cmd_bench(&s, &input, model.as_deref(), output.as_deref(), &g).map(|_| ())
        }
    }
}

/// Reads a WAV and brings it to the working rate.
pub fn load_audio(path: &Path, rate: u32) -> Result<AudioClip> {
    let clip = read_wav(path)?;
    if clip.sample_rate() == rate {
        Ok(clip)
    } else {
        Ok(resample(&clip, rate)?)
    }
}

pub fn cmd_convert(s: &Settings, input: &Path, output: &Path, meta: Option<&Path>) -> Result<()> {
    let cm = load_colormap(&s.colormap)?;
    let clip = load_audio(input, s.sample_rate)?;
    let conv = audio2img(&clip, &s.convert, &cm)?;
    write_png(&conv.image, output)?;
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| default_sidecar_path(output));
    write_sidecar(&Sidecar::new(&conv.meta, Some(cm.name())), &meta_path)?;
    println!(
        "{}: {} bins x {} frames (PNG {}x{}), meta {}",
        output.display(),
        conv.image.rows,
        conv.image.cols,
        conv.image.cols,
        conv.image.rows,
        meta_path.display()
    );
    Ok(())
}

pub fn cmd_reconstruct(s: &Settings, input: &Path, output: &Path, meta: Option<&Path>, g: &GlaParams) -> Result<()> {
    let cm = load_colormap(&s.colormap)?;
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| default_sidecar_path(input));
    let sidecar = read_sidecar(&meta_path)?;
    let img = read_png(input)?;
    let out = img2audio(&img, &sidecar.meta(), &cm, g)?;
    write_wav(&out.clip, output)?;
    println!(
        "{}: {} samples at {} Hz, spectral convergence {:.4}",
        output.display(),
        out.clip.len(),
        out.clip.sample_rate(),
        out.convergence.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

/// Convert, restyle and reconstruct one clip.
pub fn transfer_clip(
    clip: &AudioClip,
    model: &mut TransferModel<f32>,
    s: &Settings,
    cm: &Colormap,
    g: &GlaParams,
) -> Result<(AudioClip, RgbImage, SpectralMeta)> {
    let conv = audio2img(clip, &s.convert, cm)?;
    let styled = transfer_image(model, &conv.image)?;
    let out = img2audio(&styled, &conv.meta, cm, g)?;
    Ok((out.clip, styled, conv.meta))
}

pub fn cmd_transfer(s: &Settings, input: &Path, output: &Path, model: &Path, g: &GlaParams) -> Result<()> {
    let start = Instant::now();
    let cm = load_colormap(&s.colormap)?;
    let mut net = load_model(model)?;
    let clip = load_audio(input, s.sample_rate)?;
    let (out, _, _) = transfer_clip(&clip, &mut net, s, &cm, g)?;
    write_wav(&out, output)?;
    println!("runtime: {:.2} s", start.elapsed().as_secs_f64());
    match memory::peak_mb() {
        Some(mb) => println!("peak memory: {mb:.1} MB (approximate)"),
        None => println!("peak memory: unavailable on this platform"),
    }
    Ok(())
}

const CONTENT_WINDOW_SECS: f64 = 10.0;

fn content_images(s: &Settings, args: &TrainArgs, cfg: &TrainConfig, cm: &Colormap) -> Result<Vec<RgbImage>> {
    if let Some(n) = args.synthetic {
        return synthetic_content(n, CONTENT_WINDOW_SECS, s.sample_rate, s.seed)?
            .iter()
            .map(|c| Ok(audio2img(c, &cfg.convert, cm)?.image))
            .collect();
    }
    let dir = args.content_dir.as_deref().expect("clap requires a content source");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(extension(p).as_deref(), Some("wav" | "png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Invalid(format!("{}: no .wav or .png content files", dir.display())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let window = (CONTENT_WINDOW_SECS * s.sample_rate as f64) as usize;
    paths
        .iter()
        .map(|p| {
            if extension(p).as_deref() == Some("png") {
                return read_png(p);
            }
            let clip = load_audio(p, s.sample_rate)?;
            let clip = if clip.len() > window {
                clip.window(rng.random_range(0..=clip.len() - window), window)
            } else {
                clip
            };
            Ok(audio2img(&clip, &cfg.convert, cm)?.image)
        })
        .collect()
}

fn extension(p: &Path) -> Option<String> {
    p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

pub fn cmd_train(s: &Settings, args: &TrainArgs, cfg: &TrainConfig) -> Result<()> {
    let cm = load_colormap(&s.colormap)?;
    let texture = load_audio(&args.texture, s.sample_rate)?;
    let images = content_images(s, args, cfg, &cm)?;
    let mut net = LossNetwork::new(cfg.loss_net.clone())?;
    let targets = prepare_texture_targets(&texture, &cm, cfg, &mut net)?;
    let mut model = TransferModel::new(&cfg.arch, cfg.seed)?;
    let out = args.out.clone();
    let log = train(&mut model, &images, &targets, &mut net, cfg, |end| {
        let last = end.log.records.last();
        let state = TrainState::new(cfg, end.epoch, end.iteration, end.adam.step, last);
        write_checkpoint(end.model, &state, &out).map_err(|e| {
            eprintln!("error: {e}");
            mtt_core::Error::ModelFormat("checkpoint write failed".into())
        })?;
        if let Some(r) = last {
            println!("epoch {} iteration {} total {:.6}", end.epoch, end.iteration, r.total);
        }
        Ok(())
    })?;
    save_model(&mut model, &args.out)?;
    if let Some(p) = &args.loss_log {
        write_loss_log(&log.records, p)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    File(PathBuf),
    Inline { iterations: usize },
}

/// Texture losses of the synthesized output and of its pink-noise input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthReport {
    pub input_texture_loss: f64,
    pub output_texture_loss: f64,
    pub content_residual: f64,
}

/// Content-free training on pink-noise patches.
pub fn train_synth_model(
    s: &Settings,
    texture: &AudioClip,
    cm: &Colormap,
    iterations: usize,
) -> Result<TransferModel<f32>> {
    let mut cfg = TrainConfig { steps_per_epoch: Some(iterations), seed: s.seed, convert: s.convert, ..TrainConfig::desk() };
    cfg.weights.alpha = 0.0;
    let images = (0..4)
        .map(|i| {
            let noise = pink_noise(2.0, s.sample_rate, s.seed.wrapping_add(1 + i))?;
            Ok(audio2img(&noise, &cfg.convert, cm)?.image)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = LossNetwork::new(cfg.loss_net.clone())?;
    let targets = prepare_texture_targets(texture, cm, &cfg, &mut net)?;
    let mut model = TransferModel::new(&cfg.arch, cfg.seed)?;
    train(&mut model, &images, &targets, &mut net, &cfg, |_| Ok(()))?;
    Ok(model)
}

pub fn cmd_synth(
    s: &Settings,
    texture: &Path,
    duration: f64,
    output: &Path,
    source: ModelSource,
    g: &GlaParams,
) -> Result<SynthReport> {
    let cm = load_colormap(&s.colormap)?;
    let texture = load_audio(texture, s.sample_rate)?;
    let mut model = match source {
        ModelSource::File(p) => load_model(&p)?,
        ModelSource::Inline { iterations } => train_synth_model(s, &texture, &cm, iterations)?,
    };
    let noise = pink_noise(duration, s.sample_rate, s.seed)?;
    let (clip, styled, _) = transfer_clip(&noise, &mut model, s, &cm, g)?;

    let cfg = TrainConfig::desk();
    let mut net = LossNetwork::new(cfg.loss_net.clone())?;
    let tex_img = audio2img(&texture, &s.convert, &cm)?.image;
    let targets = image_texture_targets(&tex_img, &mut net, cfg.normalization)?;
    let input_img = audio2img(&noise, &s.convert, &cm)?.image;
    let x_in = images_to_tensor::<f32>(&[&input_img])?;
    let x_out = images_to_tensor::<f32>(&[&styled])?;
    let report = SynthReport {
        input_texture_loss: texture_distance(&mut net, &targets, &x_in, cfg.normalization)?,
        output_texture_loss: texture_distance(&mut net, &targets, &x_out, cfg.normalization)?,
        content_residual: content_distance(&mut net, &x_out, &x_in, cfg.normalization)?,
    };
    write_wav(&clip, output)?;
    println!(
        "texture loss vs target: pink-noise input {:.6e}, output {:.6e} (ratio {:.3})",
        report.input_texture_loss,
        report.output_texture_loss,
        report.output_texture_loss / report.input_texture_loss
    );
    println!("content residual vs input: {:.6e}", report.content_residual);
    println!("{}: {} samples at {} Hz", output.display(), clip.len(), clip.sample_rate());
    Ok(report)
}

pub fn cmd_bench(
    s: &Settings,
    input: &Path,
    model: Option<&Path>,
    output: Option<&Path>,
    g: &GlaParams,
) -> Result<Vec<BenchRow>> {
    let cm = load_colormap(&s.colormap)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| extension(p).as_deref() == Some("wav"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Invalid(format!("{}: no .wav files to benchmark", input.display())));
    }
    let mut net = match model {
        Some(p) => load_model(p)?,
        None => TransferModel::new(&ArchConfig::desk(), s.seed)?,
    };
    let mut rows = Vec::new();
    for f in &files {
        memory::reset_peak();
        let start = Instant::now();
        let clip = load_audio(f, s.sample_rate)?;
        transfer_clip(&clip, &mut net, s, &cm, g)?;
        rows.push(BenchRow {
            file: f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            seconds: start.elapsed().as_secs_f64(),
            peak_mb: memory::peak_mb(),
        });
    }
    let n = rows.len() as f64;
    let mean = BenchRow {
        file: "mean".into(),
        seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / n,
        peak_mb: rows.iter().map(|r| r.peak_mb).collect::<Option<Vec<_>>>().map(|v| v.iter().sum::<f64>() / n),
    };
    let reference =
        BenchRow { file: "reference".into(), seconds: REFERENCE_SECONDS, peak_mb: Some(REFERENCE_PEAK_MB) };
    let mut all = rows.clone();
    all.push(mean.clone());
    all.push(reference);
    match output {
        Some(p) => write_bench_csv(&all, p)?,
        None => {
            println!("file,seconds,peak_mb");
            for r in &all {
                let mb = r.peak_mb.map(|v| format!("{v:.1}")).unwrap_or_default();
                println!("{},{:.2},{}", r.file, r.seconds, mb);
            }
        }
    }
    eprintln!(
        "mean {:.2} s per task; reference {REFERENCE_SECONDS} s and {REFERENCE_PEAK_MB} MB on a 1-core 4 GB server",
        mean.seconds
    );
    Ok(rows)
}
