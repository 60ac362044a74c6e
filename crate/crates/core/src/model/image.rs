use serde::{Deserialize, Serialize};

use super::frame::PixelSpacing;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "unassigned" => Some(Split::Unassigned),
            _ => None,
        }
    }
}

/// VOI window from the DICOM header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub width: f64,
}

/// One grayscale radiograph in its original pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    /// Row-major stored values.
    pub pixels: Vec<u16>,
    /// `None` marks an uncalibrated image.
    pub spacing: Option<PixelSpacing>,
    pub window: Option<Window>,
    pub split: Split,
}

impl ImageRecord {
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        bit_depth: u8,
        pixels: Vec<u16>,
        spacing: Option<PixelSpacing>,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            width,
            height,
            bit_depth,
            pixels,
            spacing,
            window: None,
            split: Split::Unassigned,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!("image {} has zero size", self.id)));
        }
        if self.pixels.len() != self.width as usize * self.height as usize {
            return Err(Error::Validation(format!(
                "image {}: {} pixels for a {}x{} grid",
                self.id,
                self.pixels.len(),
                self.width,
                self.height
            )));
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(Error::Validation(format!(
                "image {}: unsupported bit depth {}",
                self.id, self.bit_depth
            )));
        }
        if let Some(s) = self.spacing {
            PixelSpacing::new(s.row_mm, s.col_mm)?;
        }
        Ok(())
    }

    pub fn is_calibrated(&self) -> bool {
        self.spacing.is_some()
    }

    /// Header-only view used where pixels are not needed.
    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry { width: self.width, height: self.height, spacing: self.spacing }
    }
}

/// Size and calibration of an image without its pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: u32,
    pub height: u32,
    pub spacing: Option<PixelSpacing>,
}
