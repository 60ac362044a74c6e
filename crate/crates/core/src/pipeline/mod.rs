//! Per-image orchestration: normalize, detect, keep the best detection per
//! class, turn landmark boxes into points, segment outlines and patches,
//! and map everything back to the original frame.

mod post;
mod predictions;

pub use post::{box_center, mask_centroid, postprocess_mask, select_best_per_class, DEFAULT_MASK_THRESHOLD};
pub use predictions::{
    predictions_to_csv, LandmarkPrediction, MaskPrediction, PredictionSet, PREDICTION_CSV_HEADER,
    PREDICTION_SCHEMA_VERSION,
};

use std::sync::Mutex;

use rayon::prelude::*;

use crate::backend::{validate_detection, validate_segment, BackendDescriptor, Detection, InferenceBackend, SegmentResult};
use crate::error::{Error, Result};
use crate::ingest::{normalize_image, NormalizedImage};
use crate::model::{BBox, ClassId, ClassRegistry, FeatureKind, ImageRecord, Mask};

/// Where landmark coordinates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LandmarkSource {
    /// Centre of the detection box.
    #[default]
    Box,
    /// Centroid of the segmenter mask prompted with the detection box.
    MaskCentroid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Detections below this confidence are ignored.
    pub confidence_threshold: f64,
    pub mask_threshold: f64,
    pub landmark_source: LandmarkSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.25,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            landmark_source: LandmarkSource::Box,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence threshold must lie in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::Config(format!("mask threshold must lie in (0, 1), got {}", self.mask_threshold)));
        }
        Ok(())
    }
}

fn segment_checked(
    backend: &dyn InferenceBackend,
    img: &NormalizedImage,
    prompt: BBox,
    class: ClassId,
) -> Result<SegmentResult> {
    let r = backend.segment(img, prompt, class)?;
    validate_segment(&r, backend.descriptor().required_input_side)?;
    Ok(r)
}

/// Runs both stages on one image.
pub fn run_pipeline(
    rec: &ImageRecord,
    backend: &dyn InferenceBackend,
    registry: &ClassRegistry,
    config: &PipelineConfig,
) -> Result<PredictionSet> {
    config.validate()?;
    let desc = backend.descriptor();
    let img = normalize_image(rec, desc.required_input_side)?;
    let t = img.transform;
    let mut out = PredictionSet::new(rec.id.clone(), rec.width, rec.height, rec.spacing);
    if !rec.is_calibrated() {
        out.warnings.push("image has no pixel spacing; errors are reported in pixels".into());
    }

    let mut accepted: Vec<Detection> = Vec::new();
    if desc.provides.can_detect() {
        for d in backend.detect(&img)? {
            validate_detection(&d, desc.required_input_side)?;
            if registry.get(d.class_id).is_none() {
                out.warnings.push(format!("detection for unknown class index {} ignored", d.class_id));
                continue;
            }
            if d.confidence >= config.confidence_threshold {
                accepted.push(d);
            }
        }
    } else {
        return Err(Error::Backend(format!("backend {} cannot detect", desc.name)));
    }
    let best = select_best_per_class(&accepted);

    for fc in registry.classes() {
        let id = fc.class_id;
        let Some(d) = best.get(&id) else {
            out.missing.insert(id);
            continue;
        };
        let bbox = t.box_to_original(d.bbox)?;
        let needs_mask = fc.kind.is_region() || config.landmark_source == LandmarkSource::MaskCentroid;
        let mask = if needs_mask {
            if !desc.provides.can_segment() {
                return Err(Error::Backend(format!("backend {} cannot segment", desc.name)));
            }
            let r = segment_checked(backend, &img, d.bbox, id)?;
            let m = if r.clipped_empty { None } else { postprocess_mask(&r, config.mask_threshold)? };
            if m.is_none() {
                out.warnings.push(format!("{}: segmentation came back empty", fc.code));
                out.missing.insert(id);
                continue;
            }
            m
        } else {
            None
        };
        match fc.kind {
            FeatureKind::Landmark => {
                let model_point = match &mask {
                    Some(m) => mask_centroid(m).expect("non-empty mask"),
                    None => box_center(&d.bbox),
                };
                out.landmarks.insert(
                    id,
                    LandmarkPrediction {
                        point: t.to_original_frame(model_point)?,
                        bbox,
                        confidence: d.confidence,
                        calibrated: rec.is_calibrated(),
                    },
                );
            }
            FeatureKind::Outline | FeatureKind::Patch => {
                let m: Mask = mask.expect("region classes are segmented").resample(&t, rec.width, rec.height);
                if m.is_empty() {
                    out.warnings.push(format!("{}: mask vanished when mapped to the original grid", fc.code));
                    out.missing.insert(id);
                    continue;
                }
                out.masks.insert(id, MaskPrediction { mask: m, bbox, confidence: d.confidence });
            }
        }
    }
    out.validate(registry)?;
    Ok(out)
}

/// Funnels calls into a backend that declared itself single-threaded.
struct Serialized<'a> {
    inner: &'a dyn InferenceBackend,
    lock: Mutex<()>,
}

impl InferenceBackend for Serialized<'_> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn detect(&self, img: &NormalizedImage) -> Result<Vec<Detection>> {
        let _g = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        self.inner.detect(img)
    }

    fn segment(&self, img: &NormalizedImage, prompt: BBox, class_id: ClassId) -> Result<SegmentResult> {
        let _g = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        self.inner.segment(img, prompt, class_id)
    }
}

/// Outcome of one image in a batch.
#[derive(Debug)]
pub struct BatchItem {
    pub image_id: String,
    pub result: Result<PredictionSet>,
}

/// Runs the pipeline over many images on `jobs` worker threads.
///
/// `load` is called from the workers. Failures stay attached to their
/// image; results come back sorted by image id.
pub fn run_batch<L>(
    ids: &[String],
    load: L,
    backend: &dyn InferenceBackend,
    registry: &ClassRegistry,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<Vec<BatchItem>>
where
    L: Fn(&str) -> Result<ImageRecord> + Sync,
{
    config.validate()?;
    let serialized;
    let backend: &dyn InferenceBackend = if backend.descriptor().concurrent {
        backend
    } else {
        serialized = Serialized { inner: backend, lock: Mutex::new(()) };
        &serialized
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut items: Vec<BatchItem> = pool.install(|| {
        ids.par_iter()
            .map(|id| {
                let result = load(id).and_then(|rec| run_pipeline(&rec, backend, registry, config));
                if let Err(e) = &result {
                    log::warn!("{id}: {e}");
                }
                BatchItem { image_id: id.clone(), result }
            })
            .collect()
    });
    items.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(items)
}
