use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{ClassId, ClassRegistry, FeatureKind, Frame, Mask, PointPx};

pub const ANNOTATION_SCHEMA_VERSION: u64 = 1;

/// Geometry of one annotated feature, original frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(PointPx),
    Polyline(Vec<PointPx>),
    Polygon(Vec<PointPx>),
    /// Region given directly as a mask, e.g. an accepted segmentation.
    Mask(Mask),
}

impl Geometry {
    fn type_name(&self) -> &'static str {
        match self {
            Geometry::Point(_) => "point",
            Geometry::Polyline(_) => "polyline",
            Geometry::Polygon(_) => "polygon",
            Geometry::Mask(_) => "mask",
        }
    }
}

/// Ground truth for one image, keyed by class id. All coordinates are in
/// the original frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub image_id: String,
    pub landmarks: BTreeMap<ClassId, PointPx>,
    pub outlines: BTreeMap<ClassId, Vec<PointPx>>,
    pub patches: BTreeMap<ClassId, Vec<PointPx>>,
    pub masks: BTreeMap<ClassId, Mask>,
}

/// A feature entry that was skipped while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub container: String,
    pub index: usize,
    pub code: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLoad {
    pub set: AnnotationSet,
    pub rejected: Vec<Rejection>,
}

pub fn load_annotations(path: impl AsRef<Path>, registry: &ClassRegistry) -> Result<AnnotationLoad> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnnotationSet::from_json_str(&text, registry).map_err(|e| match e {
        Error::Validation(reason) => Error::ingest(path, reason),
        other => other,
    })
}

fn validate_geometry(kind: FeatureKind, g: &Geometry) -> std::result::Result<(), String> {
    match (kind, g) {
        (FeatureKind::Landmark, Geometry::Point(p)) => p.require_frame(Frame::Original).map_err(|e| e.to_string()),
        (FeatureKind::Outline, Geometry::Polyline(pts)) if pts.len() < 2 => {
            Err(format!("polyline needs at least 2 points, got {}", pts.len()))
        }
        (FeatureKind::Patch, Geometry::Polygon(pts)) if pts.len() < 3 => {
            Err(format!("polygon needs at least 3 points, got {}", pts.len()))
        }
        (FeatureKind::Outline, Geometry::Polyline(pts)) | (FeatureKind::Patch, Geometry::Polygon(pts)) => {
            if pts.iter().any(|p| p.frame != Frame::Original) {
                return Err("geometry must be in the original frame".into());
            }
            Ok(())
        }
        (FeatureKind::Outline | FeatureKind::Patch, Geometry::Mask(m)) => {
            m.require_frame(Frame::Original).map_err(|e| e.to_string())
        }
        (kind, g) => Err(format!("a {} class cannot hold {} geometry", kind.as_str(), g.type_name())),
    }
}

impl AnnotationSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self { image_id: image_id.into(), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len(&self) -> usize {
        self.landmarks.len() + self.outlines.len() + self.patches.len() + self.masks.len()
    }

    /// Adds or replaces a feature after checking its kind against the registry.
    pub fn insert(&mut self, registry: &ClassRegistry, class: ClassId, geometry: Geometry) -> Result<()> {
        let fc = registry.class(class)?;
        validate_geometry(fc.kind, &geometry)
            .map_err(|r| Error::Validation(format!("{}: {r}", fc.code)))?;
        self.remove(class);
        match geometry {
            Geometry::Point(p) => {
                self.landmarks.insert(class, p);
            }
            Geometry::Polyline(l) => {
                self.outlines.insert(class, l);
            }
            Geometry::Polygon(p) => {
                self.patches.insert(class, p);
            }
            Geometry::Mask(m) => {
                self.masks.insert(class, m);
            }
        }
        Ok(())
    }

    pub fn remove(&mut self, class: ClassId) {
        self.landmarks.remove(&class);
        self.outlines.remove(&class);
        self.patches.remove(&class);
        self.masks.remove(&class);
    }

    pub fn geometry(&self, class: ClassId) -> Option<Geometry> {
        if let Some(p) = self.landmarks.get(&class) {
            return Some(Geometry::Point(*p));
        }
        if let Some(l) = self.outlines.get(&class) {
            return Some(Geometry::Polyline(l.clone()));
        }
        if let Some(p) = self.patches.get(&class) {
            return Some(Geometry::Polygon(p.clone()));
        }
        self.masks.get(&class).map(|m| Geometry::Mask(m.clone()))
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self
            .landmarks
            .keys()
            .chain(self.outlines.keys())
            .chain(self.patches.keys())
            .chain(self.masks.keys())
            .copied()
            .collect();
        ids.sort();
        ids
    }

    /// Classes with any coordinate outside `[0, width] x [0, height]`, or a
    /// mask of the wrong size.
    pub fn out_of_bounds(&self, width: u32, height: u32) -> Vec<ClassId> {
        let inside = |p: &PointPx| p.x >= 0.0 && p.y >= 0.0 && p.x <= width as f64 && p.y <= height as f64;
        let mut out: Vec<ClassId> = Vec::new();
        out.extend(self.landmarks.iter().filter(|(_, p)| !inside(p)).map(|(c, _)| *c));
        for (c, pts) in self.outlines.iter().chain(self.patches.iter()) {
            if !pts.iter().all(inside) {
                out.push(*c);
            }
        }
        out.extend(
            self.masks
                .iter()
                .filter(|(_, m)| m.width() != width || m.height() != height)
                .map(|(c, _)| *c),
        );
        out.sort();
        out
    }

    /// Parses the canonical annotation document.
    ///
    /// Document-level problems (bad JSON, missing `image_id`, wrong schema
    /// version) are errors; a bad feature entry is collected as a
    /// [`Rejection`] and the rest of the document is still loaded.
    pub fn from_json_str(text: &str, registry: &ClassRegistry) -> Result<AnnotationLoad> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("annotation JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Validation("annotation document must be an object".into()))?;
        match obj.get("schema_version").and_then(Value::as_u64) {
            Some(ANNOTATION_SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Validation(format!("unsupported schema_version {v}"))),
            None => return Err(Error::Validation("missing schema_version".into())),
        }
        let image_id = obj
            .get("image_id")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Validation("missing image_id".into()))?;

        let mut set = AnnotationSet::new(image_id);
        let mut rejected = Vec::new();
        for container in ["landmarks", "outlines", "patches", "masks"] {
            let entries = match obj.get(container) {
                None | Some(Value::Null) => continue,
                Some(Value::Array(a)) => a,
                Some(_) => {
                    return Err(Error::Validation(format!("'{container}' must be an array")))
                }
            };
            for (index, entry) in entries.iter().enumerate() {
                let code = entry.get("code").and_then(Value::as_str).map(str::to_string);
                let mut reject = |reason: String| {
                    rejected.push(Rejection {
                        container: container.into(),
                        index,
                        code: code.clone(),
                        reason,
                    })
                };
                let Some(code_s) = code.as_deref() else {
                    reject("missing code".into());
                    continue;
                };
                let Some(fc) = registry.by_code(code_s) else {
                    reject(format!("unknown class code '{code_s}'"));
                    continue;
                };
                let expected = match fc.kind {
                    FeatureKind::Landmark => "landmarks",
                    FeatureKind::Outline => "outlines",
                    FeatureKind::Patch => "patches",
                };
                if container != expected && !(container == "masks" && fc.kind.is_region()) {
                    reject(format!("{} class listed under '{container}'", fc.kind.as_str()));
                    continue;
                }
                if set.geometry(fc.class_id).is_some() {
                    reject(format!("duplicate entry for '{code_s}'"));
                    continue;
                }
                let geometry = match parse_geometry(container, entry) {
                    Ok(g) => g,
                    Err(reason) => {
                        reject(reason);
                        continue;
                    }
                };
                if let Err(e) = validate_geometry(fc.kind, &geometry) {
                    reject(e);
                    continue;
                }
                set.insert(registry, fc.class_id, geometry)?;
            }
        }
        Ok(AnnotationLoad { set, rejected })
    }

    pub fn to_json_value(&self, registry: &ClassRegistry) -> Result<Value> {
        let pt = |p: &PointPx| json!([p.x, p.y]);
        let mut landmarks = Vec::new();
        for (c, p) in &self.landmarks {
            landmarks.push(json!({"code": registry.code(*c)?, "geometry": "point", "coordinates": pt(p)}));
        }
        let mut outlines = Vec::new();
        for (c, l) in &self.outlines {
            let coords: Vec<Value> = l.iter().map(pt).collect();
            outlines.push(json!({"code": registry.code(*c)?, "geometry": "polyline", "coordinates": coords}));
        }
        let mut patches = Vec::new();
        for (c, l) in &self.patches {
            let coords: Vec<Value> = l.iter().map(pt).collect();
            patches.push(json!({"code": registry.code(*c)?, "geometry": "polygon", "coordinates": coords}));
        }
        let mut doc = json!({
            "schema_version": ANNOTATION_SCHEMA_VERSION,
            "image_id": self.image_id,
            "landmarks": landmarks,
            "outlines": outlines,
            "patches": patches,
        });
        if !self.masks.is_empty() {
            let mut masks = Vec::new();
            for (c, m) in &self.masks {
                masks.push(json!({
                    "code": registry.code(*c)?,
                    "geometry": "mask",
                    "width": m.width(),
                    "height": m.height(),
                    "counts": m.counts(),
                }));
            }
            doc["masks"] = Value::Array(masks);
        }
        Ok(doc)
    }

    /// Canonical serialization: entries ordered by class id, pretty-printed.
    pub fn to_json_string(&self, registry: &ClassRegistry) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json_value(registry)?)?;
        s.push('\n');
        Ok(s)
    }
}

fn parse_point(v: &Value) -> std::result::Result<PointPx, String> {
    match v.as_array().map(Vec::as_slice) {
        Some([x, y]) => {
            let (x, y) = (x.as_f64(), y.as_f64());
            match (x, y) {
                (Some(x), Some(y)) => PointPx::original(x, y).map_err(|e| e.to_string()),
                _ => Err("coordinates must be numbers".into()),
            }
        }
        _ => Err("a point needs exactly 2 coordinates".into()),
    }
}

fn parse_geometry(container: &str, entry: &Value) -> std::result::Result<Geometry, String> {
    let declared = entry.get("geometry").and_then(Value::as_str);
    let expected = match container {
        "landmarks" => "point",
        "outlines" => "polyline",
        "patches" => "polygon",
        _ => "mask",
    };
    if declared != Some(expected) {
        return Err(format!("geometry must be '{expected}', got {declared:?}"));
    }
    if expected == "mask" {
        let dim = |k: &str| entry.get(k).and_then(Value::as_u64).map(|v| v as u32);
        let counts: Option<Vec<u32>> = entry
            .get("counts")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(|v| v.as_u64().map(|c| c as u32)).collect());
        return match (dim("width"), dim("height"), counts) {
            (Some(w), Some(h), Some(counts)) => Mask::from_counts(w, h, Frame::Original, counts)
                .map(Geometry::Mask)
                .map_err(|e| e.to_string()),
            _ => Err("mask needs width, height and counts".into()),
        };
    }
    let coords = entry.get("coordinates").ok_or("missing coordinates")?;
    if expected == "point" {
        return parse_point(coords).map(Geometry::Point);
    }
    let pts = coords
        .as_array()
        .ok_or("coordinates must be an array of points")?
        .iter()
        .map(parse_point)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(if expected == "polyline" { Geometry::Polyline(pts) } else { Geometry::Polygon(pts) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> ClassRegistry {
        ClassRegistry::schematic()
    }

    #[test]
    fn landmark_entry_is_loaded() {
        let reg = registry();
        let doc = r#"{"schema_version":1,"image_id":"case7",
            "landmarks":[{"code":"A01_r","geometry":"point","coordinates":[812.5,1030.0]}]}"#;
        let load = AnnotationSet::from_json_str(doc, &reg).unwrap();
        assert!(load.rejected.is_empty());
        let id = reg.by_code("A01_r").unwrap().class_id;
        let p = load.set.landmarks[&id];
        assert_eq!((p.x, p.y, p.frame), (812.5, 1030.0, Frame::Original));
    }

    #[test]
    fn unknown_code_is_rejected_rest_kept() {
        let reg = registry();
        let doc = r#"{"schema_version":1,"image_id":"c",
            "landmarks":[{"code":"ZZZ","geometry":"point","coordinates":[1,2]},
                         {"code":"A02_l","geometry":"point","coordinates":[3,4]}]}"#;
        let load = AnnotationSet::from_json_str(doc, &reg).unwrap();
        assert_eq!(load.rejected.len(), 1);
        assert_eq!(load.rejected[0].code.as_deref(), Some("ZZZ"));
        assert_eq!(load.set.landmarks.len(), 1);
    }

    #[test]
    fn empty_feature_set() {
        let load = AnnotationSet::from_json_str(r#"{"schema_version":1,"image_id":"e"}"#, &registry()).unwrap();
        assert!(load.set.is_empty());
        assert!(load.rejected.is_empty());
    }

    #[test]
    fn malformed_geometry_is_per_feature() {
        let reg = registry();
        let doc = r#"{"schema_version":1,"image_id":"m",
            "landmarks":[{"code":"A01_r","geometry":"point","coordinates":[1]}],
            "patches":[{"code":"P02","geometry":"polygon","coordinates":[[0,0],[1,1]]},
                       {"code":"A01_l","geometry":"polygon","coordinates":[[0,0],[1,1],[2,0]]}],
            "outlines":[{"code":"O08","geometry":"polyline","coordinates":[[0,0],[5,5]]}]}"#;
        let load = AnnotationSet::from_json_str(doc, &reg).unwrap();
        assert_eq!(load.rejected.len(), 3, "{:?}", load.rejected);
        assert_eq!(load.set.outlines.len(), 1);
    }

    #[test]
    fn document_level_errors() {
        let reg = registry();
        assert!(AnnotationSet::from_json_str("{", &reg).is_err());
        assert!(AnnotationSet::from_json_str(r#"{"schema_version":1}"#, &reg).is_err());
        assert!(AnnotationSet::from_json_str(r#"{"image_id":"x"}"#, &reg).is_err());
    }

    #[test]
    fn canonical_roundtrip_with_mask() {
        let reg = registry();
        let mut set = AnnotationSet::new("rt");
        let c = |code: &str| reg.by_code(code).unwrap().class_id;
        set.insert(&reg, c("F23_l"), Geometry::Point(PointPx::original(10.25, 3.0).unwrap())).unwrap();
        set.insert(
            &reg,
            c("O01_r"),
            Geometry::Polyline(vec![PointPx::original(0.0, 0.0).unwrap(), PointPx::original(4.0, 1.5).unwrap()]),
        )
        .unwrap();
        let m = Mask::from_counts(4, 2, Frame::Original, vec![3, 2, 3]).unwrap();
        set.insert(&reg, c("P01_l"), Geometry::Mask(m)).unwrap();
        let text = set.to_json_string(&reg).unwrap();
        let back = AnnotationSet::from_json_str(&text, &reg).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.set, set);
        assert_eq!(back.set.to_json_string(&reg).unwrap(), text);
    }

    #[test]
    fn insert_checks_kind() {
        let reg = registry();
        let mut set = AnnotationSet::new("k");
        let patch = reg.by_code("P02").unwrap().class_id;
        assert!(set.insert(&reg, patch, Geometry::Point(PointPx::original(1.0, 1.0).unwrap())).is_err());
        assert!(set.insert(&reg, ClassId(999), Geometry::Point(PointPx::original(1.0, 1.0).unwrap())).is_err());
    }

    #[test]
    fn bounds_flagging() {
        let reg = registry();
        let mut set = AnnotationSet::new("b");
        let a = reg.by_code("A01_r").unwrap().class_id;
        set.insert(&reg, a, Geometry::Point(PointPx::original(20.0, 3.0).unwrap())).unwrap();
        assert_eq!(set.out_of_bounds(16, 16), vec![a]);
        assert!(set.out_of_bounds(32, 32).is_empty());
    }
}
