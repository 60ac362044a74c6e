use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pelvimark::ingest::{AnnotationSet, Geometry};
use pelvimark::model::{ClassId, ClassRegistry, FeatureKind};
use pelvimark::pipeline::PredictionSet;

use crate::error::FieldError;
use crate::wire::{ResolutionKind, WireCorrection, WireGeometry, WireMask, WireResolution};

pub const REVISION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    #[default]
    Pending,
    InReview,
    Curated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Corrections,
    Finalize,
}

/// Contents of one `rev-NNNNNN.json` file: the request that produced it
/// and the complete state after applying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredRevision {
    pub schema_version: u32,
    pub image_id: String,
    pub revision: u64,
    pub base_revision: u64,
    pub action: Action,
    pub reviewer: Option<String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub delta: Vec<WireCorrection>,
    pub status: ReviewStatus,
    pub resolutions: Vec<WireResolution>,
}

/// Review state of one image as served to clients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub image_id: String,
    pub revision: u64,
    pub status: ReviewStatus,
    pub reviewer: Option<String>,
    pub updated_at: Option<u64>,
    pub resolutions: BTreeMap<ClassId, WireResolution>,
    /// The request behind the current revision, for replay detection.
    pub last: Option<(Action, Vec<WireCorrection>, Option<String>)>,
}

impl ReviewRecord {
    pub fn pending(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            revision: 0,
            status: ReviewStatus::Pending,
            reviewer: None,
            updated_at: None,
            resolutions: BTreeMap::new(),
            last: None,
        }
    }

    pub fn from_stored(rev: &StoredRevision, registry: &ClassRegistry) -> pelvimark::Result<Self> {
        let mut resolutions = BTreeMap::new();
        for r in &rev.resolutions {
            let fc = registry.by_code(&r.code).ok_or_else(|| {
                pelvimark::Error::Validation(format!(
                    "revision {} of {} names unknown class '{}'",
                    rev.revision, rev.image_id, r.code
                ))
            })?;
            resolutions.insert(fc.class_id, r.clone());
        }
        Ok(Self {
            image_id: rev.image_id.clone(),
            revision: rev.revision,
            status: rev.status,
            reviewer: rev.reviewer.clone(),
            updated_at: Some(rev.timestamp),
            resolutions,
            last: Some((rev.action, rev.delta.clone(), rev.reviewer.clone())),
        })
    }

    /// Whether a request based on the previous revision is a resend of the
    /// one that produced the current revision.
    pub fn is_replay(&self, base: u64, action: Action, delta: &[WireCorrection], reviewer: &Option<String>) -> bool {
        base + 1 == self.revision
            && self.last.as_ref().is_some_and(|(a, d, r)| *a == action && d == delta && r == reviewer)
    }

    pub fn unresolved(&self, registry: &ClassRegistry) -> Vec<String> {
        registry
            .classes()
            .iter()
            .filter(|c| !self.resolutions.contains_key(&c.class_id))
            .map(|c| c.code.clone())
            .collect()
    }

    pub fn to_json(&self, registry: &ClassRegistry) -> Value {
        serde_json::json!({
            "image_id": self.image_id,
            "revision": self.revision,
            "status": self.status,
            "reviewer": self.reviewer,
            "updated_at": self.updated_at,
            "resolutions": self.resolutions.values().collect::<Vec<_>>(),
            "unresolved": self.unresolved(registry),
        })
    }

    /// Curated geometry as an annotation document. Classes marked missing
    /// are left out.
    pub fn to_annotations(&self, registry: &ClassRegistry) -> pelvimark::Result<AnnotationSet> {
        let mut set = AnnotationSet::new(self.image_id.clone());
        for (c, r) in &self.resolutions {
            if let Some(g) = &r.geometry {
                set.insert(registry, *c, g.to_geometry()?)?;
            }
        }
        Ok(set)
    }
}

/// Image facts needed to check corrections.
pub struct ImageBounds {
    pub width: u32,
    pub height: u32,
}

fn in_bounds(p: [f64; 2], b: &ImageBounds) -> bool {
    p.iter().all(|v| v.is_finite()) && (0.0..=b.width as f64).contains(&p[0]) && (0.0..=b.height as f64).contains(&p[1])
}

fn check_mask(m: &WireMask, b: &ImageBounds) -> Result<(), String> {
    let mask = m.to_mask().map_err(|e| e.to_string())?;
    if (mask.width(), mask.height()) != (b.width, b.height) {
        return Err(format!("mask is {}x{}, image is {}x{}", mask.width(), mask.height(), b.width, b.height));
    }
    if mask.is_empty() {
        return Err("mask is empty; mark the class missing instead".into());
    }
    Ok(())
}

fn check_added(
    registry: &ClassRegistry,
    class: ClassId,
    geometry: &WireGeometry,
    b: &ImageBounds,
) -> Result<(), String> {
    if let WireGeometry::Mask(m) = geometry {
        check_mask(m, b)?;
    }
    let g: Geometry = geometry.to_geometry().map_err(|e| e.to_string())?;
    let mut scratch = AnnotationSet::new("scratch");
    scratch.insert(registry, class, g).map_err(|e| e.to_string())?;
    if !scratch.out_of_bounds(b.width, b.height).is_empty() {
        return Err("coordinates outside the image".into());
    }
    Ok(())
}

fn predicted_geometry(pred: &PredictionSet, class: ClassId, kind: FeatureKind) -> Option<WireGeometry> {
    match kind {
        FeatureKind::Landmark => {
            pred.landmarks.get(&class).map(|l| WireGeometry::Point { coordinates: [l.point.x, l.point.y] })
        }
        _ => pred.masks.get(&class).map(|m| WireGeometry::Mask(WireMask::from_mask(&m.mask))),
    }
}

/// Validates a batch of corrections and returns the parsed batch and the
/// resulting resolution map. All problems are reported together.
pub fn apply_corrections(
    record: &ReviewRecord,
    raw: &[Value],
    registry: &ClassRegistry,
    prediction: Option<&PredictionSet>,
    bounds: &ImageBounds,
) -> Result<(Vec<WireCorrection>, BTreeMap<ClassId, WireResolution>), Vec<FieldError>> {
    let mut errors = Vec::new();
    if raw.is_empty() {
        errors.push(FieldError::new("corrections", "at least one correction is required"));
    }
    let mut parsed = Vec::new();
    let mut resolutions = record.resolutions.clone();
    let mut seen = BTreeSet::new();
    for (i, v) in raw.iter().enumerate() {
        let at = |f: &str| if f.is_empty() { format!("corrections[{i}]") } else { format!("corrections[{i}].{f}") };
        let c: WireCorrection = match serde_json::from_value(v.clone()) {
            Ok(c) => c,
            Err(e) => {
                errors.push(FieldError::new(at(""), e.to_string()));
                continue;
            }
        };
        let Some(fc) = registry.by_code(c.code()) else {
            errors.push(FieldError::new(at("code"), format!("unknown class '{}'", c.code())));
            continue;
        };
        if !seen.insert(fc.class_id) {
            errors.push(FieldError::new(at("code"), format!("class {} appears more than once", fc.code)));
            continue;
        }
        let resolved = match &c {
            WireCorrection::Accepted { .. } => match prediction.and_then(|p| predicted_geometry(p, fc.class_id, fc.kind)) {
                Some(g) => Ok((ResolutionKind::Accepted, Some(g))),
                None => Err((at("kind"), format!("nothing was predicted for {} to accept", fc.code))),
            },
            WireCorrection::Moved { point, .. } => {
                if fc.kind != FeatureKind::Landmark {
                    Err((at("kind"), format!("{} is not a landmark; only landmarks can be moved", fc.code)))
                } else if !in_bounds(*point, bounds) {
                    Err((at("point"), "point lies outside the image".into()))
                } else {
                    Ok((ResolutionKind::Moved, Some(WireGeometry::Point { coordinates: *point })))
                }
            }
            WireCorrection::MaskReplaced { mask, .. } => {
                if !fc.kind.is_region() {
                    Err((at("kind"), format!("{} is a landmark; masks apply to outlines and patches", fc.code)))
                } else {
                    check_mask(mask, bounds)
                        .map(|_| (ResolutionKind::MaskReplaced, Some(WireGeometry::Mask(mask.clone()))))
                        .map_err(|r| (at("mask"), r))
                }
            }
            WireCorrection::MarkedMissing { .. } => Ok((ResolutionKind::MarkedMissing, None)),
            WireCorrection::Added { geometry, .. } => check_added(registry, fc.class_id, geometry, bounds)
                .map(|_| (ResolutionKind::Added, Some(geometry.clone())))
                .map_err(|r| (at("geometry"), r)),
        };
        match resolved {
            Ok((kind, geometry)) => {
                resolutions.insert(fc.class_id, WireResolution { code: fc.code.clone(), kind, geometry });
                parsed.push(c);
            }
            Err((field, reason)) => errors.push(FieldError::new(field, reason)),
        }
    }
    if errors.is_empty() {
        Ok((parsed, resolutions))
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const B: ImageBounds = ImageBounds { width: 10, height: 8 };

    fn fields(r: Result<(Vec<WireCorrection>, BTreeMap<ClassId, WireResolution>), Vec<FieldError>>) -> Vec<String> {
        r.unwrap_err().into_iter().map(|f| f.field).collect()
    }

    #[test]
    fn mask_must_match_image_and_be_nonempty() {
        let reg = ClassRegistry::schematic();
        let rec = ReviewRecord::pending("x");
        let wrong_size = json!({"kind": "mask_replaced", "code": "P02", "mask": {"width": 4, "height": 4, "counts": [16]}});
        let empty = json!({"kind": "mask_replaced", "code": "O08", "mask": {"width": 10, "height": 8, "counts": [80]}});
        let ok = json!({"kind": "mask_replaced", "code": "O01_r", "mask": {"width": 10, "height": 8, "counts": [3, 4, 73]}});
        assert_eq!(
            fields(apply_corrections(&rec, &[wrong_size, empty], &reg, None, &B)),
            ["corrections[0].mask", "corrections[1].mask"]
        );
        let (delta, res) = apply_corrections(&rec, &[ok], &reg, None, &B).unwrap();
        assert_eq!(delta.len(), 1);
        assert_eq!(res.len(), 1);
    }

    #[test]
    fn accept_needs_a_prediction_and_codes_are_unique() {
        let reg = ClassRegistry::schematic();
        let rec = ReviewRecord::pending("x");
        let a = json!({"kind": "accepted", "code": "A01_r"});
        let m = json!({"kind": "marked_missing", "code": "A01_r"});
        assert_eq!(fields(apply_corrections(&rec, &[a], &reg, None, &B)), ["corrections[0].kind"]);
        assert_eq!(fields(apply_corrections(&rec, &[m.clone(), m], &reg, None, &B)), ["corrections[1].code"]);
        assert_eq!(fields(apply_corrections(&rec, &[], &reg, None, &B)), ["corrections"]);
    }

    #[test]
    fn added_geometry_is_checked_against_kind_and_bounds() {
        let reg = ClassRegistry::schematic();
        let rec = ReviewRecord::pending("x");
        let point_for_outline = json!({"kind": "added", "code": "O08", "geometry": {"type": "point", "coordinates": [1.0, 1.0]}});
        let outside = json!({"kind": "added", "code": "A02_l", "geometry": {"type": "point", "coordinates": [11.0, 1.0]}});
        let good = json!({"kind": "added", "code": "A02_r", "geometry": {"type": "point", "coordinates": [3.0, 4.0]}});
        assert_eq!(
            fields(apply_corrections(&rec, &[point_for_outline, outside, good.clone()], &reg, None, &B)),
            ["corrections[0].geometry", "corrections[1].geometry"]
        );
        let (_, res) = apply_corrections(&rec, &[good], &reg, None, &B).unwrap();
        let r = res.values().next().unwrap();
        assert_eq!(r.kind, ResolutionKind::Added);
        let mut next = rec.clone();
        next.resolutions = res;
        assert_eq!(next.to_annotations(&reg).unwrap().len(), 1);
        assert_eq!(next.unresolved(&reg).len(), 89);
    }
}
