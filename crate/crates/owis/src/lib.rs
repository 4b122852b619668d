//! Files, experiments and the command line around `owis-core`.
//!
//! * [`formats`]: scene, catalog, split, checkpoint, report and prediction files.
//! * [`harness`]: the three-task protocol, the ablation grid and the run manifest.

pub mod error;
pub mod formats;
pub mod harness;

pub use error::{Error, Result};
