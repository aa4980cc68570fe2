//! Colormap, model, checkpoint and CSV log files.

use std::path::{Path, PathBuf};

use mtt_core::colormap::Colormap;
use mtt_core::nn::{format, TransferModel};
use mtt_core::train::{LossRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A built-in map name (`gray`, `fire`) or the path of an `r,g,b` CSV file.
pub fn load_colormap(spec: &str) -> Result<Colormap> {
    if let Some(cm) = Colormap::builtin(spec) {
        return Ok(cm);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.to_owned());
    Ok(Colormap::parse_csv(name, &text)?)
}

pub fn save_model(model: &mut TransferModel<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, format::to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TransferModel<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format::from_bytes(&bytes)?)
}

/// Training state written next to each checkpointed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub iteration: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub crop: usize,
    pub weights: [f64; 3],
    pub adam_step: u64,
    pub last_total: Option<f64>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, epoch: usize, iteration: usize, adam_step: u64, last: Option<&LossRecord>) -> Self {
        Self {
            epoch,
            iteration,
            seed: cfg.seed,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            crop: cfg.crop,
            weights: [cfg.weights.alpha, cfg.weights.beta, cfg.weights.gamma],
            adam_step,
            last_total: last.map(|r| r.total),
        }
    }
}

/// `model.mtt` -> `model.state.json`.
pub fn state_path(model: &Path) -> PathBuf {
    model.with_extension("state.json")
}

pub fn write_checkpoint(model: &mut TransferModel<f32>, state: &TrainState, path: &Path) -> Result<()> {
    save_model(model, path)?;
    let sp = state_path(path);
    let text = serde_json::to_string_pretty(state).expect("state serializes");
    std::fs::write(&sp, text + "\n").map_err(|e| Error::io(&sp, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Invalid(format!("{}: {other:?}", path.display())),
    }
}

/// Loss log with columns `iteration, L_content, L_texture, L_tv, L_total`.
pub fn write_loss_log(records: &[LossRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["iteration", "L_content", "L_texture", "L_tv", "L_total"]).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.parts.content.to_string(),
            r.parts.texture.to_string(),
            r.parts.tv.to_string(),
            r.total.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of the benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub file: String,
    pub seconds: f64,
    pub peak_mb: Option<f64>,
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
