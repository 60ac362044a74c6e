//! Schematic pelvis radiographs with matching ground truth.
//!
//! Each case draws two femoral heads with shafts, an iliac band, an
//! obturator ring and a calibration ball, then places every registry class
//! at a jittered canonical position. Landmarks sit on integer pixel
//! coordinates so that a rasterized disk is centred exactly on its point.
//! The layout is defined for the right side of the patient (image left)
//! and mirrored for the left.

use std::f64::consts::PI;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{write_dicom, AnnotationSet, Geometry};
use crate::model::{ClassRegistry, FeatureClass, FeatureKind, ImageRecord, PixelSpacing, PointPx, Region, Side};

/// Reference canvas the layout is authored on.
const REF: f64 = 512.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub spacing_mm: f64,
    pub bit_depth: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 20, seed: 0, width: 512, height: 512, spacing_mm: 0.5, bit_depth: 12 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub record: ImageRecord,
    pub annotations: AnnotationSet,
}

pub fn synth_id(index: usize) -> String {
    format!("synth_{index:04}")
}

struct Layout {
    sx: f64,
    sy: f64,
    shift: (f64, f64),
}

impl Layout {
    /// Maps a right-side reference point into the image, mirrored for the
    /// left side.
    fn place(&self, side: Side, (x, y): (f64, f64)) -> (f64, f64) {
        let x = if side == Side::Left { REF - x } else { x };
        (x * self.sx + self.shift.0, y * self.sy + self.shift.1)
    }
}

fn arc(c: (f64, f64), rx: f64, ry: f64, from_deg: f64, to_deg: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / (n - 1) as f64) * PI / 180.0;
            (c.0 + rx * t.cos(), c.1 + ry * t.sin())
        })
        .collect()
}

const HIP: (f64, f64) = (150.0, 330.0);

fn landmark_ref(fc: &FeatureClass, k: usize, n: usize) -> (f64, f64) {
    let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
    match (fc.side, fc.region) {
        (Side::None, _) => (REF / 2.0, 140.0 + 260.0 * t),
        (_, Some(Region::Femora)) => {
            let half = n.div_ceil(2);
            if k < half {
                let u = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.5 };
                let a = (30.0 + 120.0 * u) * PI / 180.0;
                (HIP.0 + 26.0 * a.cos(), HIP.1 + 26.0 * a.sin())
            } else {
                let j = k - half;
                let m = n - half;
                let u = if m > 1 { j as f64 / (m - 1) as f64 } else { 0.5 };
                (118.0 + 14.0 * (j % 2) as f64, 390.0 + 100.0 * u)
            }
        }
        _ => {
            let a = (195.0 + 150.0 * t) * PI / 180.0;
            let r = 60.0 + 14.0 * (k % 2) as f64;
            (HIP.0 + r * a.cos(), HIP.1 + r * a.sin())
        }
    }
}

fn outline_ref(fc: &FeatureClass, k: usize) -> Vec<(f64, f64)> {
    if fc.side == Side::None {
        return arc((REF / 2.0, 290.0), 80.0 + 6.0 * k as f64, 55.0, 180.0, 360.0, 13);
    }
    match k % 7 {
        0 => arc(HIP, 40.0, 40.0, 190.0, 350.0, 9),
        1 => arc(HIP, 50.0, 50.0, 200.0, 340.0, 9),
        2 => vec![(150.0, 290.0), (120.0, 330.0), (108.0, 380.0)],
        3 => vec![(130.0, 390.0), (138.0, 500.0)],
        4 => vec![(95.0, 390.0), (100.0, 500.0)],
        5 => arc((215.0, 405.0), 25.0, 35.0, 0.0, 330.0, 12),
        _ => arc((150.0, 250.0), 110.0, 110.0, 200.0, 300.0, 9),
    }
}

fn patch_ref(fc: &FeatureClass, k: usize) -> Vec<(f64, f64)> {
    if fc.side == Side::None {
        let r = 18.0;
        let c = (REF / 2.0 + 40.0 * k as f64, 470.0);
        return (0..20)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 20.0;
                (c.0 + r * a.cos(), c.1 + r * a.sin())
            })
            .collect();
    }
    let dx = 40.0 * (k / 2) as f64;
    vec![(100.0 + dx, 400.0), (114.0 + dx, 400.0), (120.0 + dx, 498.0), (106.0 + dx, 498.0)]
}

/// Ordinal of a class among registry classes of the same kind, side and
/// landmark region, with the group size.
fn ordinal(registry: &ClassRegistry, fc: &FeatureClass) -> (usize, usize) {
    let peers: Vec<_> = registry
        .classes()
        .iter()
        .filter(|c| {
            c.kind == fc.kind && c.side == fc.side && (c.kind != FeatureKind::Landmark || c.region == fc.region)
        })
        .map(|c| c.class_id)
        .collect();
    let k = peers.iter().position(|&c| c == fc.class_id).expect("class is its own peer");
    (k, peers.len())
}

fn draw(cfg: &SynthConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let max = ((1u32 << cfg.bit_depth) - 1) as f64;
    let noise = Normal::new(0.0, max * 0.006).expect("positive sigma");
    let inv = |x: f64, y: f64| ((x - layout.shift.0) / layout.sx, (y - layout.shift.1) / layout.sy);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (rx, ry) = inv(x as f64 + 0.5, y as f64 + 0.5);
            // fold onto the right side
            let fx = if rx > REF / 2.0 { REF - rx } else { rx };
            let mut v = 0.08;
            let body = ((rx - REF / 2.0) / 240.0).powi(2) + ((ry - 300.0) / 260.0).powi(2);
            if body < 1.0 {
                v += 0.15;
            }
            let head = (fx - HIP.0).hypot(ry - HIP.1);
            if head < 40.0 {
                v += 0.35;
            }
            if (95.0..140.0).contains(&fx) && (360.0..512.0).contains(&ry) {
                v += 0.3;
            }
            let ilium = (fx - 150.0).hypot(ry - 250.0);
            if (95.0..115.0).contains(&ilium) && ry < 300.0 {
                v += 0.25;
            }
            let obt = ((fx - 215.0) / 25.0).powi(2) + ((ry - 405.0) / 35.0).powi(2);
            if (1.0..1.6).contains(&obt) {
                v += 0.2;
            }
            if (rx - REF / 2.0).hypot(ry - 470.0) < 18.0 {
                v = 0.95;
            }
            let s = (v * max + noise.sample(rng)).clamp(0.0, max);
            pixels.push(s.round() as u16);
        }
    }
    pixels
}

/// Builds case `index` of a dataset. Cases are independent of each other,
/// so any subset can be generated in any order.
pub fn synth_case(registry: &ClassRegistry, cfg: &SynthConfig, index: usize) -> Result<SynthCase> {
    if cfg.width < 64 || cfg.height < 64 {
        return Err(Error::Config("synthetic images must be at least 64x64".into()));
    }
    if !(1..=16).contains(&cfg.bit_depth) {
        return Err(Error::Config(format!("unsupported bit depth {}", cfg.bit_depth)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let layout = Layout {
        sx: cfg.width as f64 / REF,
        sy: cfg.height as f64 / REF,
        shift: (rng.random_range(-6..=6) as f64, rng.random_range(-6..=6) as f64),
    };
    let id = synth_id(index);
    let mut set = AnnotationSet::new(id.clone());
    let clamp_pt = |(x, y): (f64, f64)| -> Result<PointPx> {
        PointPx::original(x.clamp(2.0, cfg.width as f64 - 2.0), y.clamp(2.0, cfg.height as f64 - 2.0))
    };
    for fc in registry.classes() {
        let (k, n) = ordinal(registry, fc);
        let geometry = match fc.kind {
            FeatureKind::Landmark => {
                let (x, y) = layout.place(fc.side, landmark_ref(fc, k, n));
                let jx = rng.random_range(-2..=2) as f64;
                let jy = rng.random_range(-2..=2) as f64;
                Geometry::Point(clamp_pt(((x + jx).round(), (y + jy).round()))?)
            }
            FeatureKind::Outline => {
                let pts = outline_ref(fc, k)
                    .into_iter()
                    .map(|p| {
                        let (x, y) = layout.place(fc.side, p);
                        clamp_pt((x + rng.random_range(-1.0..1.0), y + rng.random_range(-1.0..1.0)))
                    })
                    .collect::<Result<_>>()?;
                Geometry::Polyline(pts)
            }
            FeatureKind::Patch => {
                let pts = patch_ref(fc, k)
                    .into_iter()
                    .map(|p| {
                        let (x, y) = layout.place(fc.side, p);
                        clamp_pt((x + rng.random_range(-0.5..0.5), y + rng.random_range(-0.5..0.5)))
                    })
                    .collect::<Result<_>>()?;
                Geometry::Polygon(pts)
            }
        };
        set.insert(registry, fc.class_id, geometry)?;
    }
    let pixels = draw(cfg, &layout, &mut rng);
    let spacing = PixelSpacing::isotropic(cfg.spacing_mm)?;
    let record = ImageRecord::new(id, cfg.width, cfg.height, cfg.bit_depth, pixels, Some(spacing))?;
    Ok(SynthCase { record, annotations: set })
}

pub fn synth_dataset(registry: &ClassRegistry, cfg: &SynthConfig) -> Result<Vec<SynthCase>> {
    (0..cfg.n).map(|i| synth_case(registry, cfg, i)).collect()
}

/// Writes `dicom/<id>.dcm`, `annotations/<id>.json` and `registry.toml`
/// under `dir`, returning the image ids.
pub fn write_synth_dataset(dir: impl AsRef<Path>, registry: &ClassRegistry, cfg: &SynthConfig) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let dicom_dir = dir.join("dicom");
    let ann_dir = dir.join("annotations");
    for d in [&dicom_dir, &ann_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let reg_path = dir.join("registry.toml");
    std::fs::write(&reg_path, registry.to_toml_string()).map_err(|e| Error::io(&reg_path, e))?;
    let mut ids = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let case = synth_case(registry, cfg, i)?;
        let id = case.record.id.clone();
        write_dicom(dicom_dir.join(format!("{id}.dcm")), &case.record)?;
        let p = ann_dir.join(format!("{id}.json"));
        std::fs::write(&p, case.annotations.to_json_string(registry)?).map_err(|e| Error::io(&p, e))?;
        ids.push(id);
    }
    Ok(ids)
}
