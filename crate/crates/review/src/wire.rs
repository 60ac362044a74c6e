//! JSON shapes exchanged with clients and stored in revision files.

use serde::{Deserialize, Serialize};

use pelvimark::ingest::Geometry;
use pelvimark::model::{Frame, Mask, PointPx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl WireMask {
    pub fn from_mask(m: &Mask) -> Self {
        Self { width: m.width(), height: m.height(), counts: m.counts().to_vec() }
    }

    pub fn to_mask(&self) -> pelvimark::Result<Mask> {
        Mask::from_counts(self.width, self.height, Frame::Original, self.counts.clone())
    }
}

/// Original-frame geometry in the same shape as annotation documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireGeometry {
    Point { coordinates: [f64; 2] },
    Polyline { coordinates: Vec<[f64; 2]> },
    Polygon { coordinates: Vec<[f64; 2]> },
    Mask(WireMask),
}

fn points(c: &[[f64; 2]]) -> pelvimark::Result<Vec<PointPx>> {
    c.iter().map(|p| PointPx::original(p[0], p[1])).collect()
}

fn coords(p: &[PointPx]) -> Vec<[f64; 2]> {
    p.iter().map(|p| [p.x, p.y]).collect()
}

impl WireGeometry {
    pub fn from_geometry(g: &Geometry) -> Self {
        match g {
            Geometry::Point(p) => WireGeometry::Point { coordinates: [p.x, p.y] },
            Geometry::Polyline(l) => WireGeometry::Polyline { coordinates: coords(l) },
            Geometry::Polygon(l) => WireGeometry::Polygon { coordinates: coords(l) },
            Geometry::Mask(m) => WireGeometry::Mask(WireMask::from_mask(m)),
        }
    }

    pub fn to_geometry(&self) -> pelvimark::Result<Geometry> {
        Ok(match self {
            WireGeometry::Point { coordinates: c } => Geometry::Point(PointPx::original(c[0], c[1])?),
            WireGeometry::Polyline { coordinates } => Geometry::Polyline(points(coordinates)?),
            WireGeometry::Polygon { coordinates } => Geometry::Polygon(points(coordinates)?),
            WireGeometry::Mask(m) => Geometry::Mask(m.to_mask()?),
        })
    }
}

/// One reviewer decision about one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireCorrection {
    /// Keep the predicted geometry.
    Accepted { code: String },
    /// Replace a landmark position.
    Moved { code: String, point: [f64; 2] },
    /// Replace an outline or patch region.
    MaskReplaced { code: String, mask: WireMask },
    /// The feature is not present on the image.
    MarkedMissing { code: String },
    /// Supply a feature the pipeline missed.
    Added { code: String, geometry: WireGeometry },
}

impl WireCorrection {
    pub fn code(&self) -> &str {
        match self {
            WireCorrection::Accepted { code }
            | WireCorrection::Moved { code, .. }
            | WireCorrection::MaskReplaced { code, .. }
            | WireCorrection::MarkedMissing { code }
            | WireCorrection::Added { code, .. } => code,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionKind {
    Accepted,
    Moved,
    MaskReplaced,
    MarkedMissing,
    Added,
}

/// Stored outcome for a class: the decision and the geometry it implies.
/// Accepted predictions are copied in so revisions stand on their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResolution {
    pub code: String,
    pub kind: ResolutionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<WireGeometry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CorrectionsRequest {
    pub base_revision: u64,
    #[serde(default)]
    pub reviewer: Option<String>,
    pub corrections: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalizeRequest {
    pub base_revision: u64,
    #[serde(default)]
    pub reviewer: Option<String>,
}
