//! Files, training driver and command line for music texture transfer.
//!
//! The numerics live in `mtt_core`; this crate adds WAV and PNG input and
//! output, the JSON metadata sidecar, model and checkpoint files, CSV logs
//! and the `mtt` binary.

pub mod cli;
mod error;
pub mod files;
pub mod image;
pub mod memory;
pub mod wav;

pub use error::{Error, Result};
