//! The two-stage inference contract: a class-aware box detector and a
//! box-prompted segmenter.
//!
//! Implementations:
//! - [`StubBackend`] replays ground truth with configurable corruptions and
//!   is what the test suites run against.
//! - [`load_model_backend`] executes exported ONNX networks (behind the
//!   `onnx` cargo feature).

mod model;
mod stub;

pub use model::{load_model_backend, MODEL_IO_LAYOUT};
pub use stub::{StubBackend, StubConfig};

use crate::error::{Error, Result};
use crate::ingest::NormalizedImage;
use crate::model::{BBox, ClassId, Frame};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: ClassId,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Per-pixel foreground probabilities on the model-input grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![0.0; width as usize * height as usize] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub class_id: ClassId,
    pub prob_mask: ProbabilityMap,
    pub prompt_box: BBox,
    /// The prompt had no overlap with the image; the map is all zeros.
    pub clipped_empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Detect,
    Segment,
    Both,
}

impl Capability {
    pub fn can_detect(&self) -> bool {
        matches!(self, Capability::Detect | Capability::Both)
    }

    pub fn can_segment(&self) -> bool {
        matches!(self, Capability::Segment | Capability::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendDescriptor {
    pub name: String,
    pub required_input_side: u32,
    pub provides: Capability,
    /// `false` asks the pipeline to serialize calls into this backend.
    pub concurrent: bool,
}

impl BackendDescriptor {
    pub fn new(name: impl Into<String>, required_input_side: u32, provides: Capability) -> Result<Self> {
        if required_input_side == 0 {
            return Err(Error::Config("backend input side must be positive".into()));
        }
        Ok(Self { name: name.into(), required_input_side, provides, concurrent: true })
    }
}

pub trait InferenceBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Zero or more detections in the model frame, several per class allowed.
    fn detect(&self, img: &NormalizedImage) -> Result<Vec<Detection>>;

    /// Probability mask for the object inside `prompt`.
    fn segment(&self, img: &NormalizedImage, prompt: BBox, class_id: ClassId) -> Result<SegmentResult>;
}

pub(crate) fn check_input(desc: &BackendDescriptor, img: &NormalizedImage) -> Result<()> {
    let side = desc.required_input_side;
    if img.width != side || img.height != side {
        return Err(Error::Backend(format!(
            "{} expects {side}x{side} input, got {}x{}",
            desc.name, img.width, img.height
        )));
    }
    Ok(())
}

/// Clips a prompt to the image, `None` when it lies entirely outside.
pub fn clip_prompt(prompt: &BBox, img: &NormalizedImage) -> Option<BBox> {
    let clipped = prompt.clip(img.width, img.height);
    if clipped.as_ref() != Some(prompt) {
        log::warn!("{}: prompt box clipped to the image bounds", img.image_id);
    }
    clipped
}

/// Boundary check applied to every detection regardless of backend.
pub fn validate_detection(d: &Detection, side: u32) -> Result<()> {
    if !(0.0..=1.0).contains(&d.confidence) {
        return Err(Error::Backend(format!("detection confidence {} outside [0, 1]", d.confidence)));
    }
    if d.bbox.frame != Frame::Model {
        return Err(Error::Backend("detection box is not in the model frame".into()));
    }
    BBox::new(d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max, Frame::Model)
        .map_err(|e| Error::Backend(format!("detection box: {e}")))?;
    if side == 0 {
        return Err(Error::Backend("zero input side".into()));
    }
    Ok(())
}

pub fn validate_segment(r: &SegmentResult, side: u32) -> Result<()> {
    if r.prob_mask.width != side || r.prob_mask.height != side {
        return Err(Error::Backend(format!(
            "segment mask is {}x{}, expected {side}x{side}",
            r.prob_mask.width, r.prob_mask.height
        )));
    }
    if r.prob_mask.values.len() != side as usize * side as usize {
        return Err(Error::Backend("segment mask length does not match its size".into()));
    }
    if r.prob_mask.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Backend("segment probabilities outside [0, 1]".into()));
    }
    Ok(())
}
