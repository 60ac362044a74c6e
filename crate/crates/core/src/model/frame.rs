use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate frame a geometric value lives in.
///
/// `Original` is the radiograph's native pixel grid; `Model` is the
/// letterboxed square grid handed to the inference backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Original,
    Model,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frame::Original => f.write_str("original"),
            Frame::Model => f.write_str("model"),
        }
    }
}

pub(crate) fn expect_frame(what: &str, actual: Frame, expected: Frame) -> Result<()> {
    if actual != expected {
        return Err(Error::Contract(format!(
            "{what} is in the {actual} frame, expected {expected}"
        )));
    }
    Ok(())
}

/// Continuous pixel coordinate. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`,
/// so its centre sits at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPx {
    pub x: f64,
    pub y: f64,
    pub frame: Frame,
}

impl PointPx {
    pub fn new(x: f64, y: f64, frame: Frame) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Validation(format!("non-finite point ({x}, {y})")));
        }
        Ok(Self { x, y, frame })
    }

    pub fn original(x: f64, y: f64) -> Result<Self> {
        Self::new(x, y, Frame::Original)
    }

    pub fn model(x: f64, y: f64) -> Result<Self> {
        Self::new(x, y, Frame::Model)
    }

    pub fn require_frame(&self, frame: Frame) -> Result<()> {
        expect_frame("point", self.frame, frame)
    }
}

/// Axis-aligned box, `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub frame: Frame,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, frame: Frame) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::Validation(format!(
                "invalid box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max, frame })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> PointPx {
        PointPx {
            x: (self.x_min + self.x_max) / 2.0,
            y: (self.y_min + self.y_max) / 2.0,
            frame: self.frame,
        }
    }

    pub fn require_frame(&self, frame: Frame) -> Result<()> {
        expect_frame("box", self.frame, frame)
    }

    /// Intersection with `[0, width) x [0, height)`, `None` when nothing is left.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let x_min = self.x_min.max(0.0);
        let y_min = self.y_min.max(0.0);
        let x_max = self.x_max.min(width as f64);
        let y_max = self.y_max.min(height as f64);
        BBox::new(x_min, y_min, x_max, y_max, self.frame).ok()
    }

    pub fn iou(&self, other: &BBox) -> Result<f64> {
        expect_frame("box", other.frame, self.frame)?;
        let iw = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let ih = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = iw * ih;
        Ok(inter / (self.area() + other.area() - inter))
    }
}

/// Millimetres per pixel along rows (vertical step) and columns
/// (horizontal step), in DICOM PixelSpacing order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelSpacing {
    pub row_mm: f64,
    pub col_mm: f64,
}

impl PixelSpacing {
    pub fn new(row_mm: f64, col_mm: f64) -> Result<Self> {
        for v in [row_mm, col_mm] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "pixel spacing must be positive and finite, got ({row_mm}, {col_mm})"
                )));
            }
        }
        Ok(Self { row_mm, col_mm })
    }

    pub fn isotropic(mm: f64) -> Result<Self> {
        Self::new(mm, mm)
    }

    /// Norm of a pixel displacement measured per-axis in millimetres.
    pub fn distance_mm(&self, dx_px: f64, dy_px: f64) -> f64 {
        (dx_px * self.col_mm).hypot(dy_px * self.row_mm)
    }

    /// Spacing of the grid obtained by resampling with the given scales.
    pub fn rescaled(&self, scale_x: f64, scale_y: f64) -> PixelSpacing {
        PixelSpacing { row_mm: self.row_mm / scale_y, col_mm: self.col_mm / scale_x }
    }
}

/// Converts a scalar pixel distance to millimetres.
pub fn px_to_mm(distance_px: f64, spacing_mm_per_px: f64) -> Result<f64> {
    if !(spacing_mm_per_px.is_finite() && spacing_mm_per_px > 0.0) {
        return Err(Error::Config(format!(
            "pixel spacing must be positive, got {spacing_mm_per_px}"
        )));
    }
    Ok(distance_px * spacing_mm_per_px)
}

/// Affine map `model = original * scale + pad`, applied per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryTransform {
    pub scale_x: f64,
    pub scale_y: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

impl GeometryTransform {
    pub const IDENTITY: GeometryTransform =
        GeometryTransform { scale_x: 1.0, scale_y: 1.0, pad_x: 0.0, pad_y: 0.0 };

    pub fn new(scale_x: f64, scale_y: f64, pad_x: f64, pad_y: f64) -> Result<Self> {
        let scales_ok = [scale_x, scale_y].iter().all(|s| s.is_finite() && *s > 0.0);
        if !scales_ok || !pad_x.is_finite() || !pad_y.is_finite() {
            return Err(Error::Config(format!(
                "transform is not invertible: scale ({scale_x}, {scale_y}), pad ({pad_x}, {pad_y})"
            )));
        }
        Ok(Self { scale_x, scale_y, pad_x, pad_y })
    }

    /// Aspect-preserving resize so the longer side becomes `side`, then
    /// symmetric padding to a `side x side` square.
    ///
    /// Returns the transform plus the resized content size. Per-axis scales
    /// are `content / original` so the content fills whole pixels exactly.
    pub fn letterbox(width: u32, height: u32, side: u32) -> Result<(Self, u32, u32)> {
        if width == 0 || height == 0 || side == 0 {
            return Err(Error::Config(format!(
                "letterbox needs positive sizes, got {width}x{height} -> {side}"
            )));
        }
        let longer = width.max(height) as f64;
        let ratio = side as f64 / longer;
        let content_w = ((width as f64 * ratio).round() as u32).clamp(1, side);
        let content_h = ((height as f64 * ratio).round() as u32).clamp(1, side);
        let pad_x = ((side - content_w) / 2) as f64;
        let pad_y = ((side - content_h) / 2) as f64;
        let t = Self::new(
            content_w as f64 / width as f64,
            content_h as f64 / height as f64,
            pad_x,
            pad_y,
        )?;
        Ok((t, content_w, content_h))
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn to_model_frame(&self, p: PointPx) -> Result<PointPx> {
        p.require_frame(Frame::Original)?;
        PointPx::model(p.x * self.scale_x + self.pad_x, p.y * self.scale_y + self.pad_y)
    }

    pub fn to_original_frame(&self, p: PointPx) -> Result<PointPx> {
        p.require_frame(Frame::Model)?;
        PointPx::original((p.x - self.pad_x) / self.scale_x, (p.y - self.pad_y) / self.scale_y)
    }

    pub fn box_to_original(&self, b: BBox) -> Result<BBox> {
        b.require_frame(Frame::Model)?;
        let lo = self.to_original_frame(PointPx { x: b.x_min, y: b.y_min, frame: Frame::Model })?;
        let hi = self.to_original_frame(PointPx { x: b.x_max, y: b.y_max, frame: Frame::Model })?;
        BBox::new(lo.x, lo.y, hi.x, hi.y, Frame::Original)
    }

    pub fn box_to_model(&self, b: BBox) -> Result<BBox> {
        b.require_frame(Frame::Original)?;
        let lo = self.to_model_frame(PointPx { x: b.x_min, y: b.y_min, frame: Frame::Original })?;
        let hi = self.to_model_frame(PointPx { x: b.x_max, y: b.y_max, frame: Frame::Original })?;
        BBox::new(lo.x, lo.y, hi.x, hi.y, Frame::Model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: PointPx, x: f64, y: f64) -> bool {
        (a.x - x).abs() < 1e-12 && (a.y - y).abs() < 1e-12
    }

    #[test]
    fn forward_examples() {
        let half = GeometryTransform::new(0.5, 0.5, 0.0, 0.0).unwrap();
        assert!(close(half.to_model_frame(PointPx::original(100.0, 200.0).unwrap()).unwrap(), 50.0, 100.0));

        let padded = GeometryTransform::new(1.7, 0.3, 12.0, 5.0).unwrap();
        assert!(close(padded.to_model_frame(PointPx::original(0.0, 0.0).unwrap()).unwrap(), 12.0, 5.0));

        let quarter = GeometryTransform::new(0.25, 0.25, 8.0, 0.0).unwrap();
        let m = quarter.to_model_frame(PointPx::original(64.0, 32.0).unwrap()).unwrap();
        assert!(close(m, 24.0, 8.0));
        assert_eq!(m.frame, Frame::Model);
    }

    #[test]
    fn inverse_examples() {
        let half = GeometryTransform::new(0.5, 0.5, 0.0, 0.0).unwrap();
        assert!(close(half.to_original_frame(PointPx::model(50.0, 100.0).unwrap()).unwrap(), 100.0, 200.0));
        let quarter = GeometryTransform::new(0.25, 0.25, 8.0, 0.0).unwrap();
        let o = quarter.to_original_frame(PointPx::model(24.0, 8.0).unwrap()).unwrap();
        assert!(close(o, 64.0, 32.0));
        assert_eq!(o.frame, Frame::Original);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let t = GeometryTransform::IDENTITY;
        assert!(matches!(t.to_model_frame(PointPx::model(1.0, 1.0).unwrap()), Err(Error::Contract(_))));
        assert!(matches!(t.to_original_frame(PointPx::original(1.0, 1.0).unwrap()), Err(Error::Contract(_))));
    }

    #[test]
    fn non_invertible_transform_rejected() {
        assert!(GeometryTransform::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(GeometryTransform::new(1.0, -2.0, 0.0, 0.0).is_err());
        assert!(GeometryTransform::new(1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn letterbox_portrait() {
        let (t, w, h) = GeometryTransform::letterbox(1024, 2048, 512).unwrap();
        assert_eq!((w, h), (256, 512));
        assert_eq!(t, GeometryTransform::new(0.25, 0.25, 128.0, 0.0).unwrap());
        let (same, _, _) = GeometryTransform::letterbox(512, 512, 512).unwrap();
        assert!(same.is_identity());
    }

    #[test]
    fn mm_conversion() {
        assert_eq!(px_to_mm(10.0, 0.2).unwrap(), 2.0);
        assert_eq!(px_to_mm(0.0, 0.2).unwrap(), 0.0);
        assert!(matches!(px_to_mm(1.0, 0.0), Err(Error::Config(_))));
        let unit = PixelSpacing::isotropic(1.0).unwrap();
        assert_eq!(unit.distance_mm(3.0, 4.0), 5.0);
        assert!(PixelSpacing::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn box_validation_and_clip() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0, Frame::Model).is_err());
        let b = BBox::new(-5.0, 10.0, 20.0, 30.0, Frame::Model).unwrap();
        let c = b.clip(16, 16).unwrap();
        assert_eq!((c.x_min, c.y_min, c.x_max, c.y_max), (0.0, 10.0, 16.0, 16.0));
        assert!(BBox::new(20.0, 20.0, 30.0, 30.0, Frame::Model).unwrap().clip(16, 16).is_none());
    }
}
