use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use crate::backend::{Detection, SegmentResult};
use crate::error::{Error, Result};
use crate::model::{BBox, ClassId, DenseMask, Frame, Mask, PointPx};

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Total order used to pick one detection per class: confidence, then box
/// area, then the smaller `y_min`.
fn rank(a: &Detection, b: &Detection) -> Ordering {
    a.confidence
        .total_cmp(&b.confidence)
        .then(a.bbox.area().total_cmp(&b.bbox.area()))
        .then(b.bbox.y_min.total_cmp(&a.bbox.y_min))
}

pub fn select_best_per_class(dets: &[Detection]) -> BTreeMap<ClassId, Detection> {
    let mut best: BTreeMap<ClassId, Detection> = BTreeMap::new();
    for d in dets {
        match best.get(&d.class_id) {
            Some(cur) if rank(d, cur) != Ordering::Greater => {}
            _ => {
                best.insert(d.class_id, d.clone());
            }
        }
    }
    best
}

pub fn box_center(b: &BBox) -> PointPx {
    b.center()
}

/// Thresholds a probability map and keeps its largest 4-connected
/// component. `None` when nothing survives the threshold.
///
/// Equal-sized components resolve to the one reached first in row-major
/// order.
pub fn postprocess_mask(r: &SegmentResult, threshold: f64) -> Result<Option<Mask>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("mask threshold must lie in (0, 1), got {threshold}")));
    }
    let (w, h) = (r.prob_mask.width as usize, r.prob_mask.height as usize);
    let fg: Vec<bool> = r.prob_mask.values.iter().map(|&p| p as f64 >= threshold).collect();
    let mut label = vec![0u32; fg.len()];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if fg[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let Some((keep, _)) = best else {
        return Ok(None);
    };
    let mut dense = DenseMask::new(w as u32, h as u32, Frame::Model);
    for (i, &l) in label.iter().enumerate() {
        dense.data[i] = l == keep;
    }
    Ok(Some(dense.encode()))
}

/// Mean of the pixel centres of a non-empty mask.
pub fn mask_centroid(m: &Mask) -> Option<PointPx> {
    let w = m.width() as u64;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u64);
    for (start, len) in m.foreground_runs() {
        for i in start..start + len {
            sx += (i % w) as f64 + 0.5;
            sy += (i / w) as f64 + 0.5;
        }
        n += len;
    }
    (n > 0).then(|| PointPx { x: sx / n as f64, y: sy / n as f64, frame: m.frame() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ProbabilityMap;

    fn det(c: u32, conf: f64, b: (f64, f64, f64, f64)) -> Detection {
        Detection { class_id: ClassId(c), bbox: BBox::new(b.0, b.1, b.2, b.3, Frame::Model).unwrap(), confidence: conf }
    }

    #[test]
    fn argmax_and_tie_breaks() {
        let dets = [det(0, 0.7, (0.0, 0.0, 4.0, 4.0)), det(0, 0.9, (1.0, 1.0, 2.0, 2.0)), det(1, 0.5, (3.0, 3.0, 5.0, 5.0))];
        let best = select_best_per_class(&dets);
        assert_eq!(best[&ClassId(0)].confidence, 0.9);
        assert_eq!(best[&ClassId(1)], dets[2]);

        let tie = [det(0, 0.5, (0.0, 0.0, 8.0, 8.0)), det(0, 0.5, (0.0, 0.0, 10.0, 10.0))];
        assert_eq!(select_best_per_class(&tie)[&ClassId(0)].bbox.area(), 100.0);
        let tie_y = [det(0, 0.5, (0.0, 5.0, 4.0, 9.0)), det(0, 0.5, (0.0, 2.0, 4.0, 6.0))];
        assert_eq!(select_best_per_class(&tie_y)[&ClassId(0)].bbox.y_min, 2.0);
        // order independence
        let rev: Vec<_> = tie_y.iter().rev().cloned().collect();
        assert_eq!(select_best_per_class(&rev), select_best_per_class(&tie_y));
        assert!(select_best_per_class(&[]).is_empty());
    }

    #[test]
    fn centers() {
        let c = box_center(&BBox::new(10.0, 20.0, 30.0, 40.0, Frame::Original).unwrap());
        assert_eq!((c.x, c.y), (20.0, 30.0));
        let c = box_center(&BBox::new(0.0, 0.0, 1.0, 1.0, Frame::Original).unwrap());
        assert_eq!((c.x, c.y), (0.5, 0.5));
        let c = box_center(&BBox::new(96.0, 96.0, 105.0, 105.0, Frame::Original).unwrap());
        assert_eq!((c.x, c.y), (100.5, 100.5));
    }

    fn result(w: u32, h: u32, values: Vec<f32>) -> SegmentResult {
        SegmentResult {
            class_id: ClassId(0),
            prob_mask: ProbabilityMap { width: w, height: h, values },
            prompt_box: BBox::new(0.0, 0.0, w as f64, h as f64, Frame::Model).unwrap(),
            clipped_empty: false,
        }
    }

    #[test]
    fn keeps_largest_component() {
        // 50-pixel block and a 7-pixel bar, separated by a gap column
        let (w, h) = (20u32, 10u32);
        let mut v = vec![0.0f32; (w * h) as usize];
        for y in 0..5 {
            for x in 0..10 {
                v[(y * w + x) as usize] = 0.9;
            }
        }
        for y in 0..7 {
            v[(y * w + 15) as usize] = 0.8;
        }
        let m = postprocess_mask(&result(w, h, v.clone()), 0.5).unwrap().unwrap();
        assert_eq!(m.area(), 50);
        let d = m.to_dense();
        assert!(d.get(0, 0) && !d.get(15, 0));

        // diagonal contact does not connect under 4-connectivity
        let mut diag = vec![0.0f32; 16];
        diag[0] = 1.0;
        diag[5] = 1.0;
        diag[6] = 1.0;
        assert_eq!(postprocess_mask(&result(4, 4, diag), 0.5).unwrap().unwrap().area(), 2);
    }

    #[test]
    fn sub_threshold_is_none() {
        assert!(postprocess_mask(&result(4, 4, vec![0.4; 16]), 0.5).unwrap().is_none());
        assert!(postprocess_mask(&result(4, 4, vec![0.4; 16]), 1.0).is_err());
        // the threshold is inclusive
        assert_eq!(postprocess_mask(&result(2, 2, vec![0.5; 4]), 0.5).unwrap().unwrap().area(), 4);
    }

    #[test]
    fn centroid_of_square() {
        let mut d = DenseMask::new(8, 8, Frame::Model);
        for y in 2..4 {
            for x in 4..6 {
                d.set(x, y, true);
            }
        }
        let c = mask_centroid(&d.encode()).unwrap();
        assert_eq!((c.x, c.y), (5.0, 3.0));
        assert!(mask_centroid(&Mask::empty(8, 8, Frame::Model)).is_none());
    }
}
