use crate::error::{Error, Result};
use crate::model::{GeometryTransform, ImageRecord};

pub const DEFAULT_INPUT_SIDE: u32 = 512;

/// Square 8-bit model input and the transform back to the original grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub intensities: Vec<u8>,
    /// original -> model
    pub transform: GeometryTransform,
    /// Set when the source had no intensity range; the output is all zeros.
    pub degenerate: bool,
}

impl NormalizedImage {
    pub fn side(&self) -> u32 {
        self.width
    }
}

/// Maps stored values to `[0, 255]`: the DICOM window when present,
/// otherwise min-max over the image. Returns `None` for a flat image.
fn intensity_map(rec: &ImageRecord) -> Option<Vec<f32>> {
    if let Some(w) = rec.window {
        // linear VOI LUT function
        let (c, width) = (w.center, w.width.max(1.0));
        let lower = c - 0.5 - (width - 1.0) / 2.0;
        let upper = c - 0.5 + (width - 1.0) / 2.0;
        return Some(
            rec.pixels
                .iter()
                .map(|&v| {
                    let v = v as f64;
                    let y = if v <= lower {
                        0.0
                    } else if v > upper {
                        255.0
                    } else {
                        ((v - (c - 0.5)) / (width - 1.0).max(1.0) + 0.5) * 255.0
                    };
                    y.clamp(0.0, 255.0) as f32
                })
                .collect(),
        );
    }
    let min = *rec.pixels.iter().min()?;
    let max = *rec.pixels.iter().max()?;
    if min == max {
        return None;
    }
    let range = (max - min) as f32;
    Some(rec.pixels.iter().map(|&v| (v - min) as f32 / range * 255.0).collect())
}

/// 8-bit rendition at the original resolution, using the same intensity
/// mapping as [`normalize_image`]. A flat image renders black.
pub fn render_8bit(rec: &ImageRecord) -> Vec<u8> {
    match intensity_map(rec) {
        Some(v) => v.iter().map(|&x| x.round() as u8).collect(),
        None => vec![0; rec.pixels.len()],
    }
}

/// Letterboxes `rec` into a `target_side` square of 8-bit intensities.
pub fn normalize_image(rec: &ImageRecord, target_side: u32) -> Result<NormalizedImage> {
    if target_side == 0 {
        return Err(Error::Config("target side must be positive".into()));
    }
    rec.validate()?;
    let (transform, content_w, content_h) =
        GeometryTransform::letterbox(rec.width, rec.height, target_side)?;
    let side = target_side as usize;
    let mut out = vec![0u8; side * side];

    let Some(values) = intensity_map(rec) else {
        log::warn!("{}: constant intensity, normalized image is blank", rec.id);
        return Ok(NormalizedImage {
            image_id: rec.id.clone(),
            width: target_side,
            height: target_side,
            intensities: out,
            transform,
            degenerate: true,
        });
    };

    let (w, h) = (rec.width as usize, rec.height as usize);
    let sample = |x: usize, y: usize| values[y * w + x];
    let pad_x = transform.pad_x as usize;
    let pad_y = transform.pad_y as usize;
    for oy in 0..content_h as usize {
        // source position of this output pixel centre, in index space
        let sy = ((oy as f64 + 0.5) / transform.scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..content_w as usize {
            let sx = ((ox as f64 + 0.5) / transform.scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            let top = sample(x0, y0) * (1.0 - fx) + sample(x1, y0) * fx;
            let bottom = sample(x0, y1) * (1.0 - fx) + sample(x1, y1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            out[(oy + pad_y) * side + ox + pad_x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(NormalizedImage {
        image_id: rec.id.clone(),
        width: target_side,
        height: target_side,
        intensities: out,
        transform,
        degenerate: false,
    })
}
