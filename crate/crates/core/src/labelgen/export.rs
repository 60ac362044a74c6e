//! Detector label files.
//!
//! One feature per line, UTF-8, values normalized by the canvas size and
//! printed with six decimals:
//!
//! ```text
//! <class_id> <cx> <cy> <w> <h>            # boxes
//! <class_id> <x1> <y1> <x2> <y2> ...      # polygons (one line per ring)
//! ```

use crate::error::{Error, Result};
use crate::model::ClassId;

use super::bundle::LabelBundle;
use super::raster::{mask_contours, signed_area};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelFormat {
    /// Normalized centre, width and height.
    Boxes,
    /// Normalized outer boundary of each connected piece of the mask.
    Polygons,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelFile {
    pub text: String,
    pub warnings: Vec<String>,
}

fn normalized(value: f64, extent: u32, what: &str, warnings: &mut Vec<String>) -> f64 {
    let v = value / extent as f64;
    if !(0.0..=1.0).contains(&v) {
        warnings.push(format!("{what} {v:.6} clamped to [0, 1]"));
        return v.clamp(0.0, 1.0);
    }
    v
}

pub fn export_detection_labels(bundle: &LabelBundle, format: LabelFormat) -> LabelFile {
    let mut out = LabelFile::default();
    let (w, h) = (bundle.width, bundle.height);
    match format {
        LabelFormat::Boxes => {
            for (c, b) in &bundle.boxes {
                let warn = &mut out.warnings;
                let cx = normalized((b.x_min + b.x_max) / 2.0, w, "cx", warn);
                let cy = normalized((b.y_min + b.y_max) / 2.0, h, "cy", warn);
                let bw = normalized(b.width(), w, "width", warn);
                let bh = normalized(b.height(), h, "height", warn);
                out.text.push_str(&format!("{c} {cx:.6} {cy:.6} {bw:.6} {bh:.6}\n"));
            }
        }
        LabelFormat::Polygons => {
            for (c, m) in &bundle.masks {
                for ring in mask_contours(m).into_iter().filter(|r| signed_area(r) > 0.0) {
                    let mut line = c.to_string();
                    for (x, y) in ring {
                        let x = normalized(x, w, "x", &mut out.warnings);
                        let y = normalized(y, h, "y", &mut out.warnings);
                        line.push_str(&format!(" {x:.6} {y:.6}"));
                    }
                    line.push('\n');
                    out.text.push_str(&line);
                }
            }
        }
    }
    out
}

fn parse_line(line: &str, lineno: usize) -> Result<(ClassId, Vec<f64>)> {
    let mut fields = line.split_whitespace();
    let bad = |why: &str| Error::Validation(format!("label line {lineno}: {why}"));
    let class = fields
        .next()
        .ok_or_else(|| bad("empty"))?
        .parse::<u32>()
        .map_err(|_| bad("class id is not an integer"))?;
    let values = fields
        .map(|f| f.parse::<f64>().map_err(|_| bad("value is not a number")))
        .collect::<Result<Vec<_>>>()?;
    Ok((ClassId(class), values))
}

pub fn parse_box_labels(text: &str) -> Result<Vec<(ClassId, [f64; 4])>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (c, v) = parse_line(l, i + 1)?;
            match v.as_slice() {
                [a, b, w, h] => Ok((c, [*a, *b, *w, *h])),
                _ => Err(Error::Validation(format!("label line {}: expected 4 values", i + 1))),
            }
        })
        .collect()
}

pub fn parse_polygon_labels(text: &str) -> Result<Vec<(ClassId, Vec<(f64, f64)>)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (c, v) = parse_line(l, i + 1)?;
            if v.len() < 6 || v.len() % 2 != 0 {
                return Err(Error::Validation(format!("label line {}: need at least 3 x/y pairs", i + 1)));
            }
            Ok((c, v.chunks_exact(2).map(|p| (p[0], p[1])).collect()))
        })
        .collect()
}
