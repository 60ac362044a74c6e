use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REGISTRY_SCHEMA_VERSION: u32 = 1;

/// Dense class index, contiguous from zero in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Landmark,
    Outline,
    Patch,
}

impl FeatureKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "landmark" => Some(Self::Landmark),
            "outline" => Some(Self::Outline),
            "patch" => Some(Self::Patch),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Landmark => "landmark",
            Self::Outline => "outline",
            Self::Patch => "patch",
        }
    }

    pub fn is_region(&self) -> bool {
        !matches!(self, Self::Landmark)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    None,
}

impl Side {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Self::Left),
            "right" => Some(Self::Right),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::None => "none",
        }
    }
}

/// Anatomical region of a landmark, used for report grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Femora,
    Pelvis,
}

impl Region {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "femora" => Some(Self::Femora),
            "pelvis" => Some(Self::Pelvis),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Femora => "femora",
            Self::Pelvis => "pelvis",
        }
    }
}

/// Report column a class contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalGroup {
    LandmarksFemora,
    LandmarksPelvis,
    PatchesAndOutlines,
}

impl EvalGroup {
    pub const ALL: [EvalGroup; 3] =
        [EvalGroup::LandmarksFemora, EvalGroup::LandmarksPelvis, EvalGroup::PatchesAndOutlines];

    pub fn table_heading(&self) -> &'static str {
        match self {
            EvalGroup::LandmarksFemora => "LANDMARKS on femora",
            EvalGroup::LandmarksPelvis => "LANDMARKS on pelvis",
            EvalGroup::PatchesAndOutlines => "PATCHES AND OUTLINES",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClass {
    pub class_id: ClassId,
    pub code: String,
    pub kind: FeatureKind,
    pub side: Side,
    /// Only meaningful for landmarks; landmarks without one group with the pelvis.
    pub region: Option<Region>,
    /// Per-class outline stroke override in millimetres.
    pub stroke_mm: Option<f64>,
    pub name: Option<String>,
}

impl FeatureClass {
    pub fn group(&self) -> EvalGroup {
        match (self.kind, self.region) {
            (FeatureKind::Landmark, Some(Region::Femora)) => EvalGroup::LandmarksFemora,
            (FeatureKind::Landmark, _) => EvalGroup::LandmarksPelvis,
            _ => EvalGroup::PatchesAndOutlines,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRegistry {
    schema_version: Option<u32>,
    #[serde(default, rename = "class")]
    classes: Vec<RawClass>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawClass {
    code: Option<String>,
    kind: Option<String>,
    side: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stroke_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

/// The operator-supplied feature taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRegistry {
    classes: Vec<FeatureClass>,
    by_code: HashMap<String, ClassId>,
}

/// Loads a registry file (TOML, see `docs/registry.md`).
pub fn load_class_registry(path: impl AsRef<Path>) -> Result<ClassRegistry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ClassRegistry::from_toml_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl ClassRegistry {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawRegistry =
            toml::from_str(text).map_err(|e| Error::Config(format!("registry: {e}")))?;
        match raw.schema_version {
            Some(REGISTRY_SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::Config(format!("unsupported registry schema_version {v}")))
            }
            None => return Err(Error::Config("registry is missing schema_version".into())),
        }
        if raw.classes.is_empty() {
            return Err(Error::Config("registry defines no classes".into()));
        }
        let mut classes = Vec::with_capacity(raw.classes.len());
        for (i, rc) in raw.classes.into_iter().enumerate() {
            let label = match &rc.code {
                Some(c) => format!("entry {i} ({c})"),
                None => format!("entry {i}"),
            };
            let missing = |field: &str| Error::Config(format!("{label}: missing {field}"));
            let code = rc.code.clone().ok_or_else(|| missing("code"))?;
            let kind_s = rc.kind.as_deref().ok_or_else(|| missing("kind"))?;
            let side_s = rc.side.as_deref().ok_or_else(|| missing("side"))?;
            let kind = FeatureKind::parse(kind_s)
                .ok_or_else(|| Error::Config(format!("{label}: unknown kind '{kind_s}'")))?;
            let side = Side::parse(side_s)
                .ok_or_else(|| Error::Config(format!("{label}: unknown side '{side_s}'")))?;
            let region = match rc.region.as_deref() {
                None => None,
                Some(r) => Some(
                    Region::parse(r)
                        .ok_or_else(|| Error::Config(format!("{label}: unknown region '{r}'")))?,
                ),
            };
            if let Some(s) = rc.stroke_mm {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::Config(format!("{label}: stroke_mm must be positive")));
                }
            }
            classes.push(FeatureClass {
                class_id: ClassId(i as u32),
                code,
                kind,
                side,
                region,
                stroke_mm: rc.stroke_mm,
                name: rc.name,
            });
        }
        Self::from_classes(classes)
    }

    /// Builds a registry, re-numbering ids in the given order.
    pub fn from_classes(mut classes: Vec<FeatureClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("registry defines no classes".into()));
        }
        let mut by_code = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter_mut().enumerate() {
            c.class_id = ClassId(i as u32);
            if c.code.is_empty() {
                return Err(Error::Config(format!("entry {i}: empty code")));
            }
            if by_code.insert(c.code.clone(), c.class_id).is_some() {
                return Err(Error::Config(format!("entry {i}: duplicate code '{}'", c.code)));
            }
        }
        Ok(Self { classes, by_code })
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawRegistry {
            schema_version: Some(REGISTRY_SCHEMA_VERSION),
            classes: self
                .classes
                .iter()
                .map(|c| RawClass {
                    code: Some(c.code.clone()),
                    kind: Some(c.kind.as_str().into()),
                    side: Some(c.side.as_str().into()),
                    region: c.region.map(|r| r.as_str().into()),
                    stroke_mm: c.stroke_mm,
                    name: c.name.clone(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("registry serializes")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[FeatureClass] {
        &self.classes
    }

    pub fn get(&self, id: ClassId) -> Option<&FeatureClass> {
        self.classes.get(id.0 as usize)
    }

    pub fn class(&self, id: ClassId) -> Result<&FeatureClass> {
        self.get(id)
            .ok_or_else(|| Error::Contract(format!("class id {id} is not in the registry")))
    }

    pub fn by_code(&self, code: &str) -> Option<&FeatureClass> {
        self.by_code.get(code).map(|id| &self.classes[id.0 as usize])
    }

    pub fn code(&self, id: ClassId) -> Result<&str> {
        self.class(id).map(|c| c.code.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.class_id)
    }

    pub fn of_kind(&self, kind: FeatureKind) -> impl Iterator<Item = &FeatureClass> + '_ {
        self.classes.iter().filter(move |c| c.kind == kind)
    }

    /// The eight-landmark pilot set: medial/lateral sourcil, hip rotation
    /// centre and femoral neck midpoint on both sides.
    pub fn pilot() -> Self {
        let entries = [
            ("A01_r", Side::Right, Region::Pelvis, "acetabulum medial sourcil"),
            ("A01_l", Side::Left, Region::Pelvis, "acetabulum medial sourcil"),
            ("F23_r", Side::Right, Region::Femora, "centre of hip rotation"),
            ("F23_l", Side::Left, Region::Femora, "centre of hip rotation"),
            ("A02_r", Side::Right, Region::Pelvis, "acetabular lateral sourcil"),
            ("A02_l", Side::Left, Region::Pelvis, "acetabular lateral sourcil"),
            ("F24_r", Side::Right, Region::Femora, "femoral neck midpoint"),
            ("F24_l", Side::Left, Region::Femora, "femoral neck midpoint"),
        ];
        let classes = entries
            .iter()
            .map(|(code, side, region, name)| FeatureClass {
                class_id: ClassId(0),
                code: (*code).into(),
                kind: FeatureKind::Landmark,
                side: *side,
                region: Some(*region),
                stroke_mm: None,
                name: Some((*name).into()),
            })
            .collect();
        Self::from_classes(classes).expect("pilot registry is valid")
    }

    /// A full-size schematic taxonomy: 72 landmarks (18 bilateral pelvic and
    /// 18 bilateral femoral pairs), 15 outlines and 3 patches.
    ///
    /// The codes are placeholders for synthetic data; real deployments supply
    /// their own registry file.
    pub fn schematic() -> Self {
        let mut classes = Vec::with_capacity(90);
        let mut push = |code: String, kind, side, region, name: Option<&str>| {
            classes.push(FeatureClass {
                class_id: ClassId(0),
                code,
                kind,
                side,
                region,
                stroke_mm: None,
                name: name.map(Into::into),
            })
        };
        for k in 1..=18 {
            for (suffix, side) in [("r", Side::Right), ("l", Side::Left)] {
                push(format!("A{k:02}_{suffix}"), FeatureKind::Landmark, side, Some(Region::Pelvis), None);
            }
        }
        for k in 7..=24 {
            for (suffix, side) in [("r", Side::Right), ("l", Side::Left)] {
                push(format!("F{k:02}_{suffix}"), FeatureKind::Landmark, side, Some(Region::Femora), None);
            }
        }
        for k in 1..=7 {
            for (suffix, side) in [("r", Side::Right), ("l", Side::Left)] {
                push(format!("O{k:02}_{suffix}"), FeatureKind::Outline, side, None, None);
            }
        }
        push("O08".into(), FeatureKind::Outline, Side::None, None, Some("pelvic inlet"));
        push("P01_r".into(), FeatureKind::Patch, Side::Right, None, Some("femoral cortical bone"));
        push("P01_l".into(), FeatureKind::Patch, Side::Left, None, Some("femoral cortical bone"));
        push("P02".into(), FeatureKind::Patch, Side::None, None, Some("calibration ball"));
        Self::from_classes(classes).expect("schematic registry is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pilot_registry_from_file_text() {
        let text = ClassRegistry::pilot().to_toml_string();
        let reg = ClassRegistry::from_toml_str(&text).unwrap();
        assert_eq!(reg.len(), 8);
        assert!(reg.classes().iter().all(|c| c.kind == FeatureKind::Landmark));
        let ids: Vec<u32> = reg.ids().map(|i| i.0).collect();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
        assert_eq!(reg.by_code("A01_r").unwrap().class_id, ClassId(0));
    }

    #[test]
    fn full_registry_has_ninety_classes() {
        let reg = ClassRegistry::from_toml_str(&ClassRegistry::schematic().to_toml_string()).unwrap();
        assert_eq!(reg.len(), 90);
        assert_eq!(reg.of_kind(FeatureKind::Landmark).count(), 72);
        assert_eq!(reg.classes().iter().filter(|c| c.kind.is_region()).count(), 18);
    }

    #[test]
    fn empty_file_is_config_error() {
        assert!(matches!(ClassRegistry::from_toml_str(""), Err(Error::Config(_))));
        assert!(matches!(ClassRegistry::from_toml_str("schema_version = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_and_unknown_entries_are_named() {
        let dup = r#"
schema_version = 1
[[class]]
code = "A01_r"
kind = "landmark"
side = "right"
[[class]]
code = "A01_r"
kind = "landmark"
side = "left"
"#;
        let err = ClassRegistry::from_toml_str(dup).unwrap_err().to_string();
        assert!(err.contains("duplicate code 'A01_r'"), "{err}");

        let bad_kind = r#"
schema_version = 1
[[class]]
code = "X1"
kind = "blob"
side = "none"
"#;
        let err = ClassRegistry::from_toml_str(bad_kind).unwrap_err().to_string();
        assert!(err.contains("entry 0 (X1)") && err.contains("blob"), "{err}");
    }

    #[test]
    fn groups_follow_region_metadata() {
        let reg = ClassRegistry::schematic();
        let mut counts = HashMap::new();
        for c in reg.classes() {
            *counts.entry(c.group()).or_insert(0) += 1;
        }
        assert_eq!(counts[&EvalGroup::LandmarksPelvis], 36);
        assert_eq!(counts[&EvalGroup::LandmarksFemora], 36);
        assert_eq!(counts[&EvalGroup::PatchesAndOutlines], 18);
    }
}
