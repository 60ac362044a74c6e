use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Frame, Mask, PixelSpacing, PointPx};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointError {
    /// Millimetres when `calibrated`, pixels otherwise.
    pub value: f64,
    pub calibrated: bool,
}

/// Euclidean distance with per-axis calibration. Without spacing the
/// distance is returned in pixels and flagged.
pub fn point_error_mm(pred: PointPx, gt: PointPx, spacing: Option<PixelSpacing>) -> Result<PointError> {
    pred.require_frame(Frame::Original)?;
    gt.require_frame(Frame::Original)?;
    let (dx, dy) = (pred.x - gt.x, pred.y - gt.y);
    Ok(match spacing {
        Some(s) => PointError { value: s.distance_mm(dx, dy), calibrated: true },
        None => PointError { value: dx.hypot(dy), calibrated: false },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskIou {
    pub value: f64,
    /// Both masks were empty; `value` is 1 by convention.
    pub both_empty: bool,
}

/// Intersection over union computed on the run-length form.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<MaskIou> {
    if a.width() != b.width() || a.height() != b.height() || a.frame() != b.frame() {
        return Err(Error::Contract(format!(
            "IoU of a {}x{} {} mask with a {}x{} {} mask",
            a.width(),
            a.height(),
            a.frame(),
            b.width(),
            b.height(),
            b.frame()
        )));
    }
    let ra: Vec<(u64, u64)> = a.foreground_runs().collect();
    let rb: Vec<(u64, u64)> = b.foreground_runs().collect();
    let (mut i, mut j, mut inter) = (0, 0, 0u64);
    while i < ra.len() && j < rb.len() {
        let (s1, e1) = (ra[i].0, ra[i].0 + ra[i].1);
        let (s2, e2) = (rb[j].0, rb[j].0 + rb[j].1);
        inter += e1.min(e2).saturating_sub(s1.max(s2));
        if e1 <= e2 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(MaskIou { value: 1.0, both_empty: true });
    }
    Ok(MaskIou { value: inter as f64 / union as f64, both_empty: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divides by N.
    #[default]
    Population,
    /// Divides by N - 1; a single value has deviation 0.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

/// Median, mean and standard deviation; `None` for an empty list.
pub fn aggregate(values: &[f64], kind: StdKind) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let div = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample if n > 1 => (n - 1) as f64,
        StdKind::Sample => return Some(Aggregate { median, mean, std: 0.0 }),
    };
    Some(Aggregate { median, mean, std: (ss / div).sqrt() })
}

/// `identified / total`, `None` when nothing was expected.
pub fn detection_rate(identified: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| identified as f64 / total as f64)
}

pub const DEFAULT_ACCEPTABILITY_MM: f64 = 3.0;

/// Fraction of errors strictly below `threshold_mm`.
pub fn acceptability(errors_mm: &[f64], threshold_mm: f64) -> Option<f64> {
    if errors_mm.is_empty() {
        return None;
    }
    Some(errors_mm.iter().filter(|&&e| e < threshold_mm).count() as f64 / errors_mm.len() as f64)
}
