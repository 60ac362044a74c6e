use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ClassId, ClassRegistry, FeatureKind, Frame, Mask, PixelSpacing, PointPx};

pub const PREDICTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkPrediction {
    /// Original frame.
    pub point: PointPx,
    /// Detection box the point came from, original frame.
    pub bbox: BBox,
    pub confidence: f64,
    /// Whether `point` can be converted to millimetres.
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPrediction {
    /// Original frame.
    pub mask: Mask,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Everything the pipeline produced for one image, in the original frame.
///
/// Every registry class appears in exactly one of `landmarks`, `masks` or
/// `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub spacing: Option<PixelSpacing>,
    pub landmarks: BTreeMap<ClassId, LandmarkPrediction>,
    pub masks: BTreeMap<ClassId, MaskPrediction>,
    pub missing: BTreeSet<ClassId>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    schema_version: u32,
    image_id: String,
    width: u32,
    height: u32,
    spacing: Option<PixelSpacing>,
    landmarks: Vec<RawLandmark>,
    masks: Vec<RawMask>,
    missing: Vec<String>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLandmark {
    code: String,
    x: f64,
    y: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
    calibrated: bool,
    /// Derived, written for readers; ignored on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_mm: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMask {
    code: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

fn box_arr(b: &BBox) -> [f64; 4] {
    [b.x_min, b.y_min, b.x_max, b.y_max]
}

fn arr_box(a: [f64; 4]) -> Result<BBox> {
    BBox::new(a[0], a[1], a[2], a[3], Frame::Original)
}

impl PredictionSet {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32, spacing: Option<PixelSpacing>) -> Self {
        Self {
            image_id: image_id.into(),
            width,
            height,
            spacing,
            landmarks: BTreeMap::new(),
            masks: BTreeMap::new(),
            missing: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.spacing.is_some()
    }

    /// Millimetre coordinates of a landmark, `None` when uncalibrated.
    pub fn landmark_mm(&self, class: ClassId) -> Option<(f64, f64)> {
        let s = self.spacing?;
        let p = self.landmarks.get(&class)?;
        Some((p.point.x * s.col_mm, p.point.y * s.row_mm))
    }

    /// Checks kinds, frames and the partition of the registry.
    pub fn validate(&self, registry: &ClassRegistry) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("predictions for {}: {msg}", self.image_id)));
        for (c, p) in &self.landmarks {
            if registry.class(*c)?.kind != FeatureKind::Landmark {
                return bad(format!("{} is not a landmark class", registry.code(*c)?));
            }
            p.point.require_frame(Frame::Original)?;
            if !(0.0..=1.0).contains(&p.confidence) {
                return bad(format!("confidence {} outside [0, 1]", p.confidence));
            }
        }
        for (c, m) in &self.masks {
            if !registry.class(*c)?.kind.is_region() {
                return bad(format!("{} is not an outline or patch class", registry.code(*c)?));
            }
            m.mask.require_frame(Frame::Original)?;
            if m.mask.width() != self.width || m.mask.height() != self.height {
                return bad(format!("mask for {} has the wrong size", registry.code(*c)?));
            }
        }
        let mut seen = BTreeSet::new();
        for c in self.landmarks.keys().chain(self.masks.keys()).chain(self.missing.iter()) {
            if !seen.insert(*c) {
                return bad(format!("class {} is both predicted and missing", registry.code(*c)?));
            }
        }
        if seen.len() != registry.len() {
            return bad(format!("covers {} of {} registry classes", seen.len(), registry.len()));
        }
        Ok(())
    }

    pub fn to_json_string(&self, registry: &ClassRegistry) -> Result<String> {
        let mut landmarks = Vec::new();
        for (c, p) in &self.landmarks {
            let mm = self.landmark_mm(*c);
            landmarks.push(RawLandmark {
                code: registry.code(*c)?.to_string(),
                x: p.point.x,
                y: p.point.y,
                bbox: box_arr(&p.bbox),
                confidence: p.confidence,
                calibrated: p.calibrated,
                x_mm: mm.map(|m| m.0),
                y_mm: mm.map(|m| m.1),
            });
        }
        let mut masks = Vec::new();
        for (c, m) in &self.masks {
            masks.push(RawMask {
                code: registry.code(*c)?.to_string(),
                bbox: box_arr(&m.bbox),
                confidence: m.confidence,
                width: m.mask.width(),
                height: m.mask.height(),
                counts: m.mask.counts().to_vec(),
            });
        }
        let raw = RawSet {
            schema_version: PREDICTION_SCHEMA_VERSION,
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            spacing: self.spacing,
            landmarks,
            masks,
            missing: self
                .missing
                .iter()
                .map(|c| registry.code(*c).map(str::to_string))
                .collect::<Result<_>>()?,
            warnings: self.warnings.clone(),
        };
        let mut s = serde_json::to_string_pretty(&raw)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str, registry: &ClassRegistry) -> Result<Self> {
        let raw: RawSet = serde_json::from_str(text).map_err(|e| Error::Validation(format!("prediction JSON: {e}")))?;
        if raw.schema_version != PREDICTION_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "prediction schema_version {} is not supported",
                raw.schema_version
            )));
        }
        let class = |code: &str| {
            registry
                .by_code(code)
                .map(|c| c.class_id)
                .ok_or_else(|| Error::Validation(format!("{}: unknown class code '{code}'", raw.image_id)))
        };
        let mut set = PredictionSet::new(raw.image_id.clone(), raw.width, raw.height, raw.spacing);
        set.warnings = raw.warnings.clone();
        for l in &raw.landmarks {
            set.landmarks.insert(
                class(&l.code)?,
                LandmarkPrediction {
                    point: PointPx::original(l.x, l.y)?,
                    bbox: arr_box(l.bbox)?,
                    confidence: l.confidence,
                    calibrated: l.calibrated,
                },
            );
        }
        for m in &raw.masks {
            set.masks.insert(
                class(&m.code)?,
                MaskPrediction {
                    mask: Mask::from_counts(m.width, m.height, Frame::Original, m.counts.clone())?,
                    bbox: arr_box(m.bbox)?,
                    confidence: m.confidence,
                },
            );
        }
        for code in &raw.missing {
            set.missing.insert(class(code)?);
        }
        set.validate(registry)?;
        Ok(set)
    }
}

pub const PREDICTION_CSV_HEADER: &str = "image_id,class,x_mm,y_mm,confidence";

/// Flattened landmark table; millimetre columns stay empty for
/// uncalibrated images.
pub fn predictions_to_csv(sets: &[PredictionSet], registry: &ClassRegistry) -> Result<String> {
    let mut out = String::from(PREDICTION_CSV_HEADER);
    out.push('\n');
    for set in sets {
        for (c, p) in &set.landmarks {
            let (x, y) = match set.landmark_mm(*c) {
                Some((x, y)) => (format!("{x:.4}"), format!("{y:.4}")),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{},{},{x},{y},{:.4}", set.image_id, registry.code(*c)?, p.confidence).unwrap();
        }
    }
    Ok(out)
}
