//! Pixel-centre rasterization of landmarks, outlines and patches.
//!
//! Pixel `(i, j)` is set when its centre `(i + 0.5, j + 0.5)` lies inside
//! the shape. Distances are measured in millimetres so anisotropic spacing
//! turns disks into ellipses.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{BBox, DenseMask, Frame, Mask, PixelSpacing, PointPx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub frame: Frame,
}

impl Canvas {
    pub fn new(width: u32, height: u32, frame: Frame) -> Self {
        Self { width, height, frame }
    }

    fn contains(&self, p: &PointPx) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Pixel index range `[lo, hi)` whose centres can fall in `[a, b]`.
    fn span(a: f64, b: f64, limit: u32) -> (u32, u32) {
        let lo = (a - 0.5).floor().max(0.0);
        let hi = (b - 0.5).ceil() + 1.0;
        let hi = hi.min(limit as f64);
        if hi <= lo {
            return (0, 0);
        }
        (lo as u32, hi as u32)
    }
}

fn check_frames(canvas: &Canvas, points: &[PointPx]) -> Result<()> {
    points.iter().try_for_each(|p| p.require_frame(canvas.frame))
}

/// Filled disk (ellipse under anisotropic spacing) of `radius_mm` around `p`.
///
/// A disk too small to contain any pixel centre sets the pixel containing
/// `p`. A disk with nothing on the canvas is an error.
pub fn rasterize_landmark(p: PointPx, radius_mm: f64, spacing: PixelSpacing, canvas: Canvas) -> Result<Mask> {
    check_frames(&canvas, &[p])?;
    if !(radius_mm.is_finite() && radius_mm > 0.0) {
        return Err(Error::Config(format!("landmark radius must be positive, got {radius_mm}")));
    }
    let mut mask = DenseMask::new(canvas.width, canvas.height, canvas.frame);
    let rx = radius_mm / spacing.col_mm;
    let ry = radius_mm / spacing.row_mm;
    let (x0, x1) = Canvas::span(p.x - rx, p.x + rx, canvas.width);
    let (y0, y1) = Canvas::span(p.y - ry, p.y + ry, canvas.height);
    let r2 = radius_mm * radius_mm;
    for y in y0..y1 {
        let dy = (y as f64 + 0.5 - p.y) * spacing.row_mm;
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - p.x) * spacing.col_mm;
            if dx * dx + dy * dy <= r2 {
                mask.set(x, y, true);
            }
        }
    }
    if mask.is_empty() {
        if !canvas.contains(&p) {
            return Err(Error::EmptyMask(format!("landmark at ({}, {}) is off the canvas", p.x, p.y)));
        }
        mask.set(p.x.floor() as u32, p.y.floor() as u32, true);
    }
    Ok(mask.encode())
}

/// Squared millimetre distance from `c` to segment `ab`, all in pixels.
fn segment_dist2_mm(c: (f64, f64), a: (f64, f64), b: (f64, f64), s: PixelSpacing) -> f64 {
    let (ax, ay) = (a.0 * s.col_mm, a.1 * s.row_mm);
    let (bx, by) = (b.0 * s.col_mm, b.1 * s.row_mm);
    let (cx, cy) = (c.0 * s.col_mm, c.1 * s.row_mm);
    let (ex, ey) = (bx - ax, by - ay);
    let len2 = ex * ex + ey * ey;
    let t = if len2 == 0.0 { 0.0 } else { (((cx - ax) * ex + (cy - ay) * ey) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (ax + t * ex - cx, ay + t * ey - cy);
    qx * qx + qy * qy
}

/// Stroke of width `stroke_mm` along a polyline: every pixel whose centre is
/// within `stroke_mm / 2` of some segment.
pub fn rasterize_outline(line: &[PointPx], stroke_mm: f64, spacing: PixelSpacing, canvas: Canvas) -> Result<Mask> {
    if line.len() < 2 {
        return Err(Error::Validation(format!("polyline needs at least 2 points, got {}", line.len())));
    }
    check_frames(&canvas, line)?;
    if !(stroke_mm.is_finite() && stroke_mm > 0.0) {
        return Err(Error::Config(format!("stroke width must be positive, got {stroke_mm}")));
    }
    let half = stroke_mm / 2.0;
    if line.iter().all(|p| p.x == line[0].x && p.y == line[0].y) {
        return rasterize_landmark(line[0], half, spacing, canvas);
    }
    let half2 = half * half;
    let (hx, hy) = (half / spacing.col_mm, half / spacing.row_mm);
    let mut mask = DenseMask::new(canvas.width, canvas.height, canvas.frame);
    for seg in line.windows(2) {
        let (a, b) = ((seg[0].x, seg[0].y), (seg[1].x, seg[1].y));
        let (x0, x1) = Canvas::span(a.0.min(b.0) - hx, a.0.max(b.0) + hx, canvas.width);
        let (y0, y1) = Canvas::span(a.1.min(b.1) - hy, a.1.max(b.1) + hy, canvas.height);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = (x as f64 + 0.5, y as f64 + 0.5);
                if segment_dist2_mm(c, a, b, spacing) <= half2 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("outline stroke does not reach the canvas".into()));
    }
    Ok(mask.encode())
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

/// Signed shoelace area; positive for clockwise rings in image (y-down) axes.
pub fn signed_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Checks that a polygon is usable as a patch: at least three vertices,
/// non-zero area, and no edge crossing or touching a non-adjacent edge.
pub fn validate_polygon(poly: &[PointPx]) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::Validation(format!("polygon needs at least 3 vertices, got {}", poly.len())));
    }
    let ring: Vec<(f64, f64)> = poly.iter().map(|p| (p.x, p.y)).collect();
    if signed_area(&ring).abs() < 1e-12 {
        return Err(Error::Validation("polygon has zero area".into()));
    }
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if a == b {
            return Err(Error::Validation(format!("polygon repeats vertex {i}")));
        }
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(Error::Validation(format!("polygon is self-intersecting (edges {i} and {j})")));
            }
        }
    }
    Ok(())
}

/// Even-odd scanline fill of one or more rings, sampling pixel centres.
///
/// An edge counts on a row when the row's centre line is in `[min_y, max_y)`
/// of the edge; a pixel is set when its centre is in `[x_enter, x_leave)`.
pub fn scanline_fill(rings: &[Vec<(f64, f64)>], canvas: Canvas) -> DenseMask {
    let mut mask = DenseMask::new(canvas.width, canvas.height, canvas.frame);
    let mut xs: Vec<f64> = Vec::new();
    for y in 0..canvas.height {
        let cy = y as f64 + 0.5;
        xs.clear();
        for ring in rings {
            let n = ring.len();
            for i in 0..n {
                let (pi, pj) = (ring[i], ring[(i + n - 1) % n]);
                if (pi.1 > cy) != (pj.1 > cy) {
                    xs.push((pj.0 - pi.0) * (cy - pi.1) / (pj.1 - pi.1) + pi.0);
                }
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            // centres x + 0.5 in [pair[0], pair[1])
            let lo = (pair[0] - 0.5).ceil().max(0.0);
            let hi = (pair[1] - 0.5).ceil().min(canvas.width as f64);
            let mut x = lo;
            while x < hi {
                mask.set(x as u32, y, true);
                x += 1.0;
            }
        }
    }
    mask
}

/// Even-odd fill of a simple polygon (implicitly closed).
pub fn rasterize_patch(poly: &[PointPx], canvas: Canvas) -> Result<Mask> {
    check_frames(&canvas, poly)?;
    validate_polygon(poly)?;
    let ring: Vec<(f64, f64)> = poly.iter().map(|p| (p.x, p.y)).collect();
    let mask = scanline_fill(&[ring], canvas);
    if mask.is_empty() {
        return Err(Error::EmptyMask("polygon covers no pixel centre on the canvas".into()));
    }
    Ok(mask.encode())
}

/// Tight half-open bounding box of the set pixels.
pub fn mask_to_bbox(m: &Mask) -> Result<BBox> {
    m.bbox()
}

/// Boundary rings of a mask traced along pixel edges.
///
/// Outer boundaries come out with positive [`signed_area`], holes with
/// negative. Pixels touching only diagonally end up in separate rings.
/// The even-odd fill of all rings reproduces the mask exactly.
pub fn mask_contours(m: &Mask) -> Vec<Vec<(f64, f64)>> {
    let d = m.to_dense();
    let (w, h) = (d.width as i64, d.height as i64);
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && d.get(x as u32, y as u32);
    // directed edges with the set pixel on the walker's right (y down)
    let mut edges: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
    let mut add = |a: (i64, i64), b: (i64, i64)| edges.entry(a).or_default().push(b);
    for y in 0..h {
        for x in 0..w {
            if !on(x, y) {
                continue;
            }
            if !on(x, y - 1) {
                add((x, y), (x + 1, y));
            }
            if !on(x + 1, y) {
                add((x + 1, y), (x + 1, y + 1));
            }
            if !on(x, y + 1) {
                add((x + 1, y + 1), (x, y + 1));
            }
            if !on(x - 1, y) {
                add((x, y + 1), (x, y));
            }
        }
    }
    let mut rings = Vec::new();
    while let Some((&start, _)) = edges.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut prev = start;
        let mut cur = edges.get_mut(&start).unwrap().remove(0);
        while cur != start {
            let dir = (cur.0 - prev.0, cur.1 - prev.1);
            let outs = edges.get_mut(&cur).expect("boundary edges form closed loops");
            let pick = if outs.len() == 1 {
                0
            } else {
                // pinch vertex: turn right so diagonal neighbours separate
                let right = (-dir.1, dir.0);
                outs.iter()
                    .position(|n| (n.0 - cur.0, n.1 - cur.1) == right)
                    .unwrap_or(0)
            };
            let next = outs.remove(pick);
            ring.push(cur);
            prev = cur;
            cur = next;
        }
        edges.retain(|_, v| !v.is_empty());
        rings.push(simplify_ring(&ring));
    }
    rings
        .into_iter()
        .map(|r| r.into_iter().map(|(x, y)| (x as f64, y as f64)).collect())
        .collect()
}

fn simplify_ring(ring: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| ring[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canvas(w: u32, h: u32) -> Canvas {
        Canvas::new(w, h, Frame::Model)
    }

    fn pt(x: f64, y: f64) -> PointPx {
        PointPx::model(x, y).unwrap()
    }

    fn iso(mm: f64) -> PixelSpacing {
        PixelSpacing::isotropic(mm).unwrap()
    }

    #[test]
    fn two_mm_disk_at_half_mm() {
        let m = rasterize_landmark(pt(100.0, 100.0), 2.0, iso(0.5), canvas(512, 512)).unwrap();
        let b = mask_to_bbox(&m).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (96.0, 96.0, 104.0, 104.0));
        assert_eq!(b.center(), pt(100.0, 100.0));
    }

    #[test]
    fn sub_pixel_disk_is_one_pixel() {
        let m = rasterize_landmark(pt(10.2, 7.9), 0.4, iso(1.0), canvas(32, 32)).unwrap();
        assert_eq!(m.area(), 1);
        let b = m.bbox().unwrap();
        assert_eq!((b.x_min, b.y_min), (10.0, 7.0));
    }

    #[test]
    fn disk_off_canvas_fails() {
        let err = rasterize_landmark(pt(-20.0, 5.0), 2.0, iso(1.0), canvas(32, 32)).unwrap_err();
        assert!(matches!(err, Error::EmptyMask(_)));
    }

    #[test]
    fn anisotropic_disk_is_ellipse() {
        let s = PixelSpacing::new(1.0, 0.5).unwrap();
        let m = rasterize_landmark(pt(20.0, 20.0), 2.0, s, canvas(40, 40)).unwrap();
        let b = m.bbox().unwrap();
        assert_eq!((b.width(), b.height()), (8.0, 4.0));
    }

    #[test]
    fn horizontal_band() {
        let line = [pt(5.0, 10.0), pt(15.0, 10.0), pt(25.0, 10.0)];
        let m = rasterize_outline(&line, 2.0, iso(1.0), canvas(32, 32)).unwrap();
        let d = m.to_dense();
        // interior columns: rows 9 and 10 (centres 9.5, 10.5)
        for x in 6..24 {
            let rows: Vec<u32> = (0..32).filter(|&y| d.get(x, y)).collect();
            assert_eq!(rows, vec![9, 10], "column {x}");
        }
    }

    #[test]
    fn coincident_polyline_is_disk() {
        let a = rasterize_outline(&[pt(8.0, 8.0), pt(8.0, 8.0)], 6.0, iso(1.0), canvas(16, 16)).unwrap();
        let b = rasterize_landmark(pt(8.0, 8.0), 3.0, iso(1.0), canvas(16, 16)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn square_patch() {
        let sq = [pt(10.0, 10.0), pt(20.0, 10.0), pt(20.0, 20.0), pt(10.0, 20.0)];
        let m = rasterize_patch(&sq, canvas(32, 32)).unwrap();
        assert_eq!(m.area(), 100);
        assert_eq!(m.bbox().unwrap(), BBox::new(10.0, 10.0, 20.0, 20.0, Frame::Model).unwrap());
    }

    #[test]
    fn degenerate_and_crossing_polygons() {
        let flat = [pt(0.0, 0.0), pt(5.0, 5.0), pt(10.0, 10.0)];
        assert!(matches!(rasterize_patch(&flat, canvas(16, 16)), Err(Error::Validation(_))));
        let bowtie = [pt(0.0, 0.0), pt(10.0, 10.0), pt(10.0, 0.0), pt(0.0, 10.0)];
        assert!(matches!(rasterize_patch(&bowtie, canvas(16, 16)), Err(Error::Validation(_))));
        assert!(rasterize_patch(&[pt(0.0, 0.0), pt(1.0, 1.0)], canvas(4, 4)).is_err());
    }

    #[test]
    fn frame_mismatch() {
        let p = PointPx::original(3.0, 3.0).unwrap();
        assert!(matches!(rasterize_landmark(p, 1.0, iso(1.0), canvas(8, 8)), Err(Error::Contract(_))));
    }

    #[test]
    fn bbox_singleton_and_full() {
        let mut d = DenseMask::new(10, 10, Frame::Model);
        d.set(5, 7, true);
        let b = mask_to_bbox(&d.encode()).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (5.0, 7.0, 6.0, 8.0));
        let full = DenseMask { data: vec![true; 100], ..d.clone() };
        let b = mask_to_bbox(&full.encode()).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (0.0, 0.0, 10.0, 10.0));
        assert!(mask_to_bbox(&DenseMask::new(3, 3, Frame::Model).encode()).is_err());
    }

    #[test]
    fn contours_of_pinched_pair() {
        let mut d = DenseMask::new(3, 3, Frame::Model);
        d.set(0, 0, true);
        d.set(1, 1, true);
        let rings = mask_contours(&d.encode());
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 4 && signed_area(r) == 1.0));
    }

    #[test]
    fn disk_is_rotation_symmetric() {
        for r in [1.0, 2.0, 3.3, 5.0] {
            let d = rasterize_landmark(pt(16.0, 16.0), r, iso(0.5), canvas(32, 32)).unwrap().to_dense();
            for y in 0..32 {
                for x in 0..32 {
                    // 90 degree rotation about (16, 16) in pixel-index space
                    assert_eq!(d.get(x, y), d.get(31 - y, x));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn contour_fill_reproduces_mask(w in 1u32..20, h in 1u32..20, bits in proptest::collection::vec(proptest::bool::weighted(0.45), 400)) {
            let d = DenseMask { width: w, height: h, frame: Frame::Model, data: bits[..(w * h) as usize].to_vec() };
            let rings = mask_contours(&d.encode());
            let total: f64 = rings.iter().map(|r| signed_area(r)).sum();
            prop_assert_eq!(total, d.count() as f64);
            prop_assert_eq!(scanline_fill(&rings, canvas(w, h)), d);
        }
    }
}
