use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{acceptability, aggregate, detection_rate, mask_iou, point_error_mm, Aggregate, StdKind, DEFAULT_ACCEPTABILITY_MM};
use crate::error::{Error, Result};
use crate::ingest::AnnotationSet;
use crate::labelgen::{ground_truth_bundle, LabelBundle, LabelOptions};
use crate::model::{ClassRegistry, EvalGroup, FeatureKind, Frame, ImageGeometry};
use crate::pipeline::PredictionSet;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Reference data for one image: annotated points and the masks and boxes
/// rasterized from them in the original frame.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub annotations: AnnotationSet,
    pub geometry: ImageGeometry,
    pub bundle: LabelBundle,
}

impl GroundTruth {
    pub fn build(
        annotations: AnnotationSet,
        geometry: ImageGeometry,
        registry: &ClassRegistry,
        opts: &LabelOptions,
    ) -> Result<Self> {
        let bundle = ground_truth_bundle(&annotations, geometry, registry, opts)?;
        Ok(Self { annotations, geometry, bundle })
    }

    pub fn image_id(&self) -> &str {
        &self.annotations.image_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub std_kind: StdKind,
    pub acceptability_mm: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { std_kind: StdKind::Population, acceptability_mm: DEFAULT_ACCEPTABILITY_MM }
    }
}

/// Everything measured for one class across the evaluated images. Lists
/// are in image-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub code: String,
    pub kind: FeatureKind,
    pub group: EvalGroup,
    /// Images where this class was annotated.
    pub total: usize,
    /// Of those, images where it was predicted.
    pub identified: usize,
    pub errors_mm: Vec<f64>,
    /// Errors on images without pixel spacing; kept out of mm statistics.
    pub errors_px: Vec<f64>,
    pub ious: Vec<f64>,
    /// Number of `ious` entries where both masks were empty.
    pub both_empty: usize,
    /// Detection box against the tight ground-truth box.
    pub box_ious: Vec<f64>,
    /// Predictions for images where the class was not annotated.
    pub unmatched: usize,
}

impl ClassEval {
    pub fn rate(&self) -> Option<f64> {
        detection_rate(self.identified, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: EvalGroup,
    pub identified: usize,
    pub total: usize,
    pub rate: Option<f64>,
    pub error_mm: Option<Aggregate>,
    pub iou: Option<Aggregate>,
    pub box_iou: Option<Aggregate>,
    pub acceptability: Option<f64>,
}

/// Landmark and region statistics over all groups of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub landmarks_identified: usize,
    pub landmarks_total: usize,
    pub landmark_rate: Option<f64>,
    pub regions_identified: usize,
    pub regions_total: usize,
    pub region_rate: Option<f64>,
    pub error_mm: Option<Aggregate>,
    pub acceptability: Option<f64>,
    pub iou: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub std_kind: StdKind,
    pub acceptability_mm: f64,
    pub images: Vec<String>,
    pub uncalibrated_images: Vec<String>,
    pub classes: Vec<ClassEval>,
    pub groups: Vec<GroupSummary>,
    pub overall: Overall,
}

/// Scores predictions against ground truth. Images are paired by id;
/// every ground-truth image needs a prediction set.
pub fn evaluate(
    predictions: &[PredictionSet],
    truths: &[GroundTruth],
    registry: &ClassRegistry,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &PredictionSet> = predictions.iter().map(|p| (p.image_id.as_str(), p)).collect();
    if by_id.len() != predictions.len() {
        return Err(Error::Validation("duplicate image ids among predictions".into()));
    }
    let mut truths: Vec<&GroundTruth> = truths.iter().collect();
    truths.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    for w in truths.windows(2) {
        if w[0].image_id() == w[1].image_id() {
            return Err(Error::Validation(format!("duplicate ground truth for {}", w[0].image_id())));
        }
    }
    let mut classes: Vec<ClassEval> = registry
        .classes()
        .iter()
        .map(|fc| ClassEval {
            code: fc.code.clone(),
            kind: fc.kind,
            group: fc.group(),
            total: 0,
            identified: 0,
            errors_mm: vec![],
            errors_px: vec![],
            ious: vec![],
            both_empty: 0,
            box_ious: vec![],
            unmatched: 0,
        })
        .collect();
    let mut images = Vec::new();
    let mut uncalibrated = Vec::new();
    for gt in truths {
        let id = gt.image_id();
        let pred = by_id
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no predictions for image {id}")))?;
        if (pred.width, pred.height) != (gt.geometry.width, gt.geometry.height) {
            return Err(Error::Validation(format!(
                "{id}: predictions are {}x{}, image is {}x{}",
                pred.width, pred.height, gt.geometry.width, gt.geometry.height
            )));
        }
        images.push(id.to_string());
        let spacing = gt.geometry.spacing;
        if spacing.is_none() {
            uncalibrated.push(id.to_string());
        }
        for fc in registry.classes() {
            let ce = &mut classes[fc.class_id.0 as usize];
            let gt_box = gt.bundle.boxes.get(&fc.class_id);
            match fc.kind {
                FeatureKind::Landmark => {
                    let Some(p) = pred.landmarks.get(&fc.class_id) else { continue };
                    let Some(gp) = gt.annotations.landmarks.get(&fc.class_id) else {
                        ce.unmatched += 1;
                        continue;
                    };
                    let e = point_error_mm(p.point, *gp, spacing)?;
                    if e.calibrated {
                        ce.errors_mm.push(e.value);
                    } else {
                        ce.errors_px.push(e.value);
                    }
                    if let Some(b) = gt_box {
                        ce.box_ious.push(p.bbox.iou(b)?);
                    }
                }
                FeatureKind::Outline | FeatureKind::Patch => {
                    let Some(m) = pred.masks.get(&fc.class_id) else { continue };
                    let Some(gm) = gt.bundle.masks.get(&fc.class_id) else {
                        ce.unmatched += 1;
                        continue;
                    };
                    m.mask.require_frame(Frame::Original)?;
                    let iou = mask_iou(&m.mask, gm)?;
                    ce.ious.push(iou.value);
                    ce.both_empty += usize::from(iou.both_empty);
                    if let Some(b) = gt_box {
                        ce.box_ious.push(m.bbox.iou(b)?);
                    }
                }
            }
        }
        // totals count annotated classes that produced ground truth
        for fc in registry.classes() {
            let ce = &mut classes[fc.class_id.0 as usize];
            let has_gt = match fc.kind {
                FeatureKind::Landmark => gt.annotations.landmarks.contains_key(&fc.class_id),
                _ => gt.bundle.masks.contains_key(&fc.class_id),
            };
            if has_gt {
                ce.total += 1;
                let hit = pred.landmarks.contains_key(&fc.class_id) || pred.masks.contains_key(&fc.class_id);
                ce.identified += usize::from(hit);
            }
        }
    }
    let mut report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        std_kind: opts.std_kind,
        acceptability_mm: opts.acceptability_mm,
        images,
        uncalibrated_images: uncalibrated,
        classes,
        groups: vec![],
        overall: empty_overall(),
    };
    let (groups, overall) = summarize(&report.classes, opts.std_kind, opts.acceptability_mm);
    report.groups = groups;
    report.overall = overall;
    Ok(report)
}

fn empty_overall() -> Overall {
    Overall {
        landmarks_identified: 0,
        landmarks_total: 0,
        landmark_rate: None,
        regions_identified: 0,
        regions_total: 0,
        region_rate: None,
        error_mm: None,
        acceptability: None,
        iou: None,
    }
}

fn concat<'a>(classes: impl Iterator<Item = &'a ClassEval>, f: impl Fn(&ClassEval) -> &Vec<f64>) -> Vec<f64> {
    classes.flat_map(|c| f(c).iter().copied()).collect()
}

/// Aggregates derived from the per-class lists. Concatenation follows
/// class order so the result is reproducible bit for bit.
fn summarize(classes: &[ClassEval], kind: StdKind, gate_mm: f64) -> (Vec<GroupSummary>, Overall) {
    let groups = EvalGroup::ALL
        .iter()
        .map(|&g| {
            let members = || classes.iter().filter(move |c| c.group == g);
            let errors = concat(members(), |c| &c.errors_mm);
            let identified = members().map(|c| c.identified).sum();
            let total = members().map(|c| c.total).sum();
            GroupSummary {
                group: g,
                identified,
                total,
                rate: detection_rate(identified, total),
                error_mm: aggregate(&errors, kind),
                iou: aggregate(&concat(members(), |c| &c.ious), kind),
                box_iou: aggregate(&concat(members(), |c| &c.box_ious), kind),
                acceptability: acceptability(&errors, gate_mm),
            }
        })
        .collect();
    let lm = || classes.iter().filter(|c| c.kind == FeatureKind::Landmark);
    let rg = || classes.iter().filter(|c| c.kind != FeatureKind::Landmark);
    let errors = concat(lm(), |c| &c.errors_mm);
    let (li, lt) = (lm().map(|c| c.identified).sum(), lm().map(|c| c.total).sum());
    let (ri, rt) = (rg().map(|c| c.identified).sum(), rg().map(|c| c.total).sum());
    let overall = Overall {
        landmarks_identified: li,
        landmarks_total: lt,
        landmark_rate: detection_rate(li, lt),
        regions_identified: ri,
        regions_total: rt,
        region_rate: detection_rate(ri, rt),
        error_mm: aggregate(&errors, kind),
        acceptability: acceptability(&errors, gate_mm),
        iou: aggregate(&concat(rg(), |c| &c.ious), kind),
    };
    (groups, overall)
}

impl EvalReport {
    /// Recomputes every aggregate from the stored lists and checks the
    /// per-class invariants.
    pub fn verify(&self) -> Result<()> {
        for c in &self.classes {
            if c.identified > c.total {
                return Err(Error::Validation(format!("{}: identified exceeds total", c.code)));
            }
            if c.ious.iter().chain(&c.box_ious).any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!("{}: IoU outside [0, 1]", c.code)));
            }
            if c.errors_mm.iter().chain(&c.errors_px).any(|v| !(*v >= 0.0)) {
                return Err(Error::Validation(format!("{}: negative or undefined error", c.code)));
            }
        }
        let (groups, overall) = summarize(&self.classes, self.std_kind, self.acceptability_mm);
        if groups != self.groups || overall != self.overall {
            return Err(Error::Validation("stored aggregates do not match the per-class lists".into()));
        }
        Ok(())
    }

    pub fn group(&self, g: EvalGroup) -> Option<&GroupSummary> {
        self.groups.iter().find(|s| s.group == g)
    }

    pub fn class(&self, code: &str) -> Option<&ClassEval> {
        self.classes.iter().find(|c| c.code == code)
    }
}
