//! Detect-then-segment anatomical landmarking for planar radiographs.
//!
//! The crate is organised along the data flow:
//!
//! - [`model`]: frames, boxes, run-length masks and the class registry.
//! - [`ingest`]: DICOM and annotation loading, model-input normalization.
//! - [`labelgen`]: rasterized masks, boxes, detector label files, splits.
//! - [`backend`]: the detector/segmenter contract and its implementations.
//! - [`pipeline`]: per-image orchestration into a [`pipeline::PredictionSet`].
//! - [`eval`]: point errors, IoU, detection rates and report emitters.
//! - [`synth`]: schematic pelvis fixtures for desk-scale runs.
//! - [`store`]: the on-disk dataset layout shared by the CLI and the
//!   review service.

pub mod backend;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod labelgen;
pub mod model;
pub mod pipeline;
pub mod store;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
