//! Open-world 3D instance segmentation on voxelized scenes.
//!
//! This crate holds every algorithmic piece and has no I/O: it builds with
//! `no_std` + `alloc`. File formats, the experiment driver and the `owis`
//! command line live in the `owis` crate.
//!
//! Module map:
//!
//! * [`scene`]: scenes, instances, masks, labels and mask arithmetic.
//! * [`synthgen`]: procedural labeled voxel scenes with a long-tail class profile.
//! * [`splits`]: frequency / region / random task splits and the bundled
//!   ScanNet200 class-to-task tables.
//! * [`assignment`]: Hungarian matching and query-to-target assignment.
//! * [`segmenter`]: a small query-based segmenter with exact gradients.
//! * [`autolabel`]: objectness scoring and unknown pseudo-label selection.
//! * [`openworld`]: query store, prototypes, contrastive clustering and
//!   reachability-based probability correction.
//! * [`incremental`]: task progression, relabeling and exemplar replay.
//! * [`train`]: the training loop tying the above together.
//! * [`metrics`]: mAP, U-Recall, WI and A-OSE plus an exhaustive oracle.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assignment;
pub mod autolabel;
pub mod error;
pub mod incremental;
pub mod math;
pub mod metrics;
pub mod openworld;
pub mod rng;
pub mod scene;
pub mod segmenter;
pub mod splits;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result, ValidationError};
pub use scene::{ClassCatalog, ClassId, Instance, Label, Mask, Scene, Voxel};
