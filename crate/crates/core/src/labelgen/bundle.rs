use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::AnnotationSet;
use crate::model::{
    BBox, ClassId, ClassRegistry, Frame, GeometryTransform, ImageGeometry, Mask, PixelSpacing,
    PointPx, Split,
};

use super::raster::{rasterize_landmark, rasterize_outline, rasterize_patch, Canvas};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOptions {
    pub landmark_radius_mm: f64,
    /// Default outline stroke; registry entries may override per class.
    pub stroke_mm: f64,
    pub input_side: u32,
    /// Used for images without pixel spacing; `None` makes them an error.
    pub fallback_spacing: Option<PixelSpacing>,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            landmark_radius_mm: 2.0,
            stroke_mm: 2.0,
            input_side: crate::ingest::DEFAULT_INPUT_SIDE,
            fallback_spacing: None,
        }
    }
}

/// Per-class masks and their tight boxes for one image, in one frame.
///
/// Masks of different classes may overlap; each class keeps its own mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBundle {
    pub image_id: String,
    pub split: Split,
    pub width: u32,
    pub height: u32,
    pub frame: Frame,
    pub transform: GeometryTransform,
    pub masks: BTreeMap<ClassId, Mask>,
    pub boxes: BTreeMap<ClassId, BBox>,
    /// Classes dropped because their geometry rasterized to nothing.
    pub skipped: Vec<(ClassId, String)>,
}

impl LabelBundle {
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

fn map_points(points: &[PointPx], transform: &GeometryTransform, frame: Frame) -> Result<Vec<PointPx>> {
    points
        .iter()
        .map(|p| match frame {
            Frame::Original => {
                p.require_frame(Frame::Original)?;
                Ok(*p)
            }
            Frame::Model => transform.to_model_frame(*p),
        })
        .collect()
}

/// Rasterizes every annotated feature onto a canvas in `frame`.
///
/// With `Frame::Original` the transform is ignored and the canvas is the
/// image itself.
pub fn rasterize_annotations(
    set: &AnnotationSet,
    image: ImageGeometry,
    registry: &ClassRegistry,
    opts: &LabelOptions,
    transform: GeometryTransform,
    canvas: Canvas,
) -> Result<LabelBundle> {
    let transform = if canvas.frame == Frame::Original { GeometryTransform::IDENTITY } else { transform };
    let spacing = image
        .spacing
        .or(opts.fallback_spacing)
        .ok_or_else(|| Error::Config(format!("image {} is uncalibrated; no fallback spacing set", set.image_id)))?
        .rescaled(transform.scale_x, transform.scale_y);

    let mut bundle = LabelBundle {
        image_id: set.image_id.clone(),
        split: Split::Unassigned,
        width: canvas.width,
        height: canvas.height,
        frame: canvas.frame,
        transform,
        masks: BTreeMap::new(),
        boxes: BTreeMap::new(),
        skipped: Vec::new(),
    };

    let mut results: Vec<(ClassId, Result<Mask>)> = Vec::new();
    for (c, p) in &set.landmarks {
        let p = map_points(std::slice::from_ref(p), &transform, canvas.frame)?[0];
        results.push((*c, rasterize_landmark(p, opts.landmark_radius_mm, spacing, canvas)));
    }
    for (c, line) in &set.outlines {
        let stroke = registry.class(*c)?.stroke_mm.unwrap_or(opts.stroke_mm);
        let line = map_points(line, &transform, canvas.frame)?;
        results.push((*c, rasterize_outline(&line, stroke, spacing, canvas)));
    }
    for (c, poly) in &set.patches {
        let poly = map_points(poly, &transform, canvas.frame)?;
        results.push((*c, rasterize_patch(&poly, canvas)));
    }
    for (c, m) in &set.masks {
        if m.width() != image.width || m.height() != image.height {
            return Err(Error::Validation(format!(
                "{}: mask is {}x{}, image is {}x{}",
                registry.code(*c)?,
                m.width(),
                m.height(),
                image.width,
                image.height
            )));
        }
        let mapped = if canvas.frame == Frame::Original {
            m.clone()
        } else {
            m.resample(&transform, canvas.width, canvas.height)
        };
        results.push((*c, Ok(mapped)));
    }

    for (c, r) in results {
        let code = registry.code(c)?;
        match r {
            Ok(mask) if !mask.is_empty() => {
                bundle.boxes.insert(c, mask.bbox()?);
                bundle.masks.insert(c, mask);
            }
            Ok(_) | Err(Error::EmptyMask(_)) => {
                log::warn!("{}: {code} rasterized to an empty mask, skipped", set.image_id);
                bundle.skipped.push((c, format!("empty mask for class {code}")));
            }
            Err(e) => return Err(Error::Validation(format!("{}: {code}: {e}", set.image_id))),
        }
    }
    Ok(bundle)
}

/// Labels in the model-input frame for the configured input side.
pub fn build_label_bundle(
    set: &AnnotationSet,
    image: ImageGeometry,
    registry: &ClassRegistry,
    opts: &LabelOptions,
) -> Result<LabelBundle> {
    let (transform, _, _) = GeometryTransform::letterbox(image.width, image.height, opts.input_side)?;
    let canvas = Canvas::new(opts.input_side, opts.input_side, Frame::Model);
    rasterize_annotations(set, image, registry, opts, transform, canvas)
}

/// Ground-truth masks in the original frame, used for evaluation.
pub fn ground_truth_bundle(
    set: &AnnotationSet,
    image: ImageGeometry,
    registry: &ClassRegistry,
    opts: &LabelOptions,
) -> Result<LabelBundle> {
    let canvas = Canvas::new(image.width, image.height, Frame::Original);
    rasterize_annotations(set, image, registry, opts, GeometryTransform::IDENTITY, canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Geometry;

    fn setup() -> (ClassRegistry, AnnotationSet) {
        let reg = ClassRegistry::schematic();
        let mut set = AnnotationSet::new("b1");
        let c = |code: &str| reg.by_code(code).unwrap().class_id;
        let o = |x: f64, y: f64| PointPx::original(x, y).unwrap();
        set.insert(&reg, c("A01_r"), Geometry::Point(o(400.0, 400.0))).unwrap();
        set.insert(&reg, c("O08"), Geometry::Polyline(vec![o(100.0, 100.0), o(300.0, 120.0)])).unwrap();
        set.insert(&reg, c("P02"), Geometry::Polygon(vec![o(380.0, 380.0), o(440.0, 380.0), o(440.0, 440.0)])).unwrap();
        (reg, set)
    }

    #[test]
    fn boxes_are_tight_mask_bounds() {
        let (reg, set) = setup();
        let geom = ImageGeometry { width: 1024, height: 1024, spacing: Some(PixelSpacing::isotropic(0.25).unwrap()) };
        let b = build_label_bundle(&set, geom, &reg, &LabelOptions::default()).unwrap();
        assert_eq!(b.masks.len(), 3);
        for (c, m) in &b.masks {
            assert_eq!(b.boxes[c], m.bbox().unwrap());
            assert_eq!(m.frame(), Frame::Model);
        }
        // A01_r overlaps the P02 triangle and both survive independently
        let a = reg.by_code("A01_r").unwrap().class_id;
        let p = reg.by_code("P02").unwrap().class_id;
        let (da, dp) = (b.masks[&a].to_dense(), b.masks[&p].to_dense());
        assert!(da.data.iter().zip(&dp.data).any(|(x, y)| *x && *y));
        // at model spacing 0.5 mm/px a 2 mm landmark disk spans 8 px
        assert_eq!(b.boxes[&a].width(), 8.0);
    }

    #[test]
    fn uncalibrated_needs_fallback() {
        let (reg, set) = setup();
        let geom = ImageGeometry { width: 512, height: 512, spacing: None };
        assert!(matches!(build_label_bundle(&set, geom, &reg, &LabelOptions::default()), Err(Error::Config(_))));
        let opts = LabelOptions { fallback_spacing: Some(PixelSpacing::isotropic(0.5).unwrap()), ..Default::default() };
        assert_eq!(build_label_bundle(&set, geom, &reg, &opts).unwrap().masks.len(), 3);
    }

    #[test]
    fn off_canvas_landmark_is_skipped() {
        let reg = ClassRegistry::pilot();
        let mut set = AnnotationSet::new("s");
        set.insert(&reg, ClassId(0), Geometry::Point(PointPx::original(-50.0, 10.0).unwrap())).unwrap();
        let geom = ImageGeometry { width: 64, height: 64, spacing: Some(PixelSpacing::isotropic(1.0).unwrap()) };
        let b = ground_truth_bundle(&set, geom, &reg, &LabelOptions::default()).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.skipped.len(), 1);
        assert!(b.skipped[0].1.contains("A01_r"));
    }
}
