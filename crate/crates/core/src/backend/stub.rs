use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_input, clip_prompt, BackendDescriptor, Capability, Detection, InferenceBackend, ProbabilityMap, SegmentResult};
use crate::error::{Error, Result};
use crate::ingest::NormalizedImage;
use crate::labelgen::LabelBundle;
use crate::model::{BBox, ClassId, DenseMask, Frame};

/// Corruptions applied by [`StubBackend`] on top of ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    pub seed: u64,
    /// Classes never detected.
    pub drop: BTreeSet<ClassId>,
    /// Gaussian standard deviation of the box-centre shift, per axis, model px.
    pub center_jitter_px: f64,
    /// Gaussian standard deviation of the relative box-size change.
    pub scale_jitter: f64,
    /// Positive: dilate masks this many times; negative: erode.
    pub morphology: i32,
    /// Confidence lost per active corruption.
    pub confidence_penalty: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            drop: BTreeSet::new(),
            center_jitter_px: 0.0,
            scale_jitter: 0.0,
            morphology: 0,
            confidence_penalty: 0.1,
        }
    }
}

/// Deterministic oracle backend: returns the attached ground-truth labels,
/// optionally corrupted.
///
/// All randomness is derived from `(seed, image id, class id)`, so output
/// does not depend on call order or thread count.
#[derive(Debug, Clone)]
pub struct StubBackend {
    config: StubConfig,
    descriptor: BackendDescriptor,
    truth: HashMap<String, LabelBundle>,
}

impl StubBackend {
    pub fn new(config: StubConfig, input_side: u32, truth: impl IntoIterator<Item = LabelBundle>) -> Result<Self> {
        for v in [config.center_jitter_px, config.scale_jitter, config.confidence_penalty] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("stub corruption parameters must be >= 0, got {v}")));
            }
        }
        let descriptor = BackendDescriptor::new("stub", input_side, Capability::Both)?;
        let mut map = HashMap::new();
        for b in truth {
            if b.frame != Frame::Model || b.width != input_side || b.height != input_side {
                return Err(Error::Config(format!(
                    "ground truth for {} is not a {input_side}x{input_side} model-frame bundle",
                    b.image_id
                )));
            }
            map.insert(b.image_id.clone(), b);
        }
        Ok(Self { config, descriptor, truth: map })
    }

    pub fn config(&self) -> &StubConfig {
        &self.config
    }

    fn truth_for(&self, img: &NormalizedImage) -> Result<&LabelBundle> {
        self.truth
            .get(&img.image_id)
            .ok_or_else(|| Error::Backend(format!("stub has no ground truth for image {}", img.image_id)))
    }

    fn rng(&self, image_id: &str, class: ClassId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ crate::ingest::stable_hash(image_id.as_bytes()));
        rng.set_stream(class.0 as u64);
        rng
    }

    fn confidence(&self) -> f64 {
        let active = [
            self.config.center_jitter_px > 0.0,
            self.config.scale_jitter > 0.0,
            self.config.morphology != 0,
        ]
        .iter()
        .filter(|&&a| a)
        .count();
        (1.0 - self.config.confidence_penalty * active as f64).clamp(0.0, 1.0)
    }

    fn corrupt_box(&self, image_id: &str, class: ClassId, b: &BBox) -> Result<BBox> {
        let cfg = &self.config;
        if cfg.center_jitter_px == 0.0 && cfg.scale_jitter == 0.0 {
            return Ok(*b);
        }
        let mut rng = self.rng(image_id, class);
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let dx = std_normal.sample(&mut rng) * cfg.center_jitter_px;
        let dy = std_normal.sample(&mut rng) * cfg.center_jitter_px;
        let factor = (1.0 + std_normal.sample(&mut rng) * cfg.scale_jitter).max(0.1);
        let c = b.center();
        let (hw, hh) = (b.width() / 2.0 * factor, b.height() / 2.0 * factor);
        BBox::new(c.x + dx - hw, c.y + dy - hh, c.x + dx + hw, c.y + dy + hh, Frame::Model)
    }
}

/// One step of binary dilation (or erosion) with a 3x3 square element.
/// Pixels beyond the border count as background.
pub(crate) fn morph_step(m: &DenseMask, dilate: bool) -> DenseMask {
    let mut out = m.clone();
    let (w, h) = (m.width as i64, m.height as i64);
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            let mut all = true;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    let v = nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as u32, ny as u32);
                    any |= v;
                    all &= v;
                }
            }
            out.set(x as u32, y as u32, if dilate { any } else { all });
        }
    }
    out
}

impl InferenceBackend for StubBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn detect(&self, img: &NormalizedImage) -> Result<Vec<Detection>> {
        check_input(&self.descriptor, img)?;
        let truth = self.truth_for(img)?;
        let confidence = self.confidence();
        truth
            .boxes
            .iter()
            .filter(|(c, _)| !self.config.drop.contains(c))
            .map(|(c, b)| {
                Ok(Detection {
                    class_id: *c,
                    bbox: self.corrupt_box(&img.image_id, *c, b)?,
                    confidence,
                })
            })
            .collect()
    }

    fn segment(&self, img: &NormalizedImage, prompt: BBox, class_id: ClassId) -> Result<SegmentResult> {
        check_input(&self.descriptor, img)?;
        prompt.require_frame(Frame::Model)?;
        let truth = self.truth_for(img)?;
        let Some(_clipped) = clip_prompt(&prompt, img) else {
            return Ok(SegmentResult {
                class_id,
                prob_mask: ProbabilityMap::zeros(img.width, img.height),
                prompt_box: prompt,
                clipped_empty: true,
            });
        };
        let mut dense = match truth.masks.get(&class_id) {
            Some(m) => m.to_dense(),
            None => DenseMask::new(img.width, img.height, Frame::Model),
        };
        for _ in 0..self.config.morphology.unsigned_abs() {
            dense = morph_step(&dense, self.config.morphology > 0);
        }
        Ok(SegmentResult {
            class_id,
            prob_mask: ProbabilityMap {
                width: img.width,
                height: img.height,
                values: dense.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            },
            prompt_box: prompt,
            clipped_empty: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelgen::{rasterize_landmark, Canvas};
    use crate::model::{GeometryTransform, PixelSpacing, PointPx, Split};
    use std::collections::BTreeMap;

    const SIDE: u32 = 64;

    fn disk_bundle(id: &str, centers: &[(u32, f64, f64)]) -> LabelBundle {
        let canvas = Canvas::new(SIDE, SIDE, Frame::Model);
        let spacing = PixelSpacing::isotropic(0.5).unwrap();
        let mut masks = BTreeMap::new();
        let mut boxes = BTreeMap::new();
        for &(c, x, y) in centers {
            let m = rasterize_landmark(PointPx::model(x, y).unwrap(), 2.0, spacing, canvas).unwrap();
            boxes.insert(ClassId(c), m.bbox().unwrap());
            masks.insert(ClassId(c), m);
        }
        LabelBundle {
            image_id: id.into(),
            split: Split::Test,
            width: SIDE,
            height: SIDE,
            frame: Frame::Model,
            transform: GeometryTransform::IDENTITY,
            masks,
            boxes,
            skipped: vec![],
        }
    }

    fn blank(id: &str) -> NormalizedImage {
        NormalizedImage {
            image_id: id.into(),
            width: SIDE,
            height: SIDE,
            intensities: vec![0; (SIDE * SIDE) as usize],
            transform: GeometryTransform::IDENTITY,
            degenerate: false,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let truth = disk_bundle("a", &[(0, 20.0, 20.0), (1, 40.0, 30.0)]);
        let stub = StubBackend::new(StubConfig::default(), SIDE, [truth.clone()]).unwrap();
        let dets = stub.detect(&blank("a")).unwrap();
        assert_eq!(dets.len(), 2);
        for d in &dets {
            assert_eq!(d.bbox, truth.boxes[&d.class_id]);
            assert_eq!(d.confidence, 1.0);
        }
        let seg = stub.segment(&blank("a"), dets[0].bbox, dets[0].class_id).unwrap();
        let got: Vec<bool> = seg.prob_mask.values.iter().map(|&p| p >= 0.5).collect();
        assert_eq!(got, truth.masks[&ClassId(0)].to_dense().data);
    }

    #[test]
    fn drop_set_removes_class() {
        let truth = disk_bundle("a", &[(0, 20.0, 20.0), (1, 40.0, 30.0)]);
        let cfg = StubConfig { drop: [ClassId(0)].into(), ..Default::default() };
        let stub = StubBackend::new(cfg, SIDE, [truth]).unwrap();
        let dets = stub.detect(&blank("a")).unwrap();
        assert_eq!(dets.iter().map(|d| d.class_id).collect::<Vec<_>>(), vec![ClassId(1)]);
    }

    #[test]
    fn jitter_mean_displacement() {
        // 2D Gaussian radial mean is sigma * sqrt(pi / 2)
        let sigma = 2.0;
        let ids: Vec<String> = (0..100).map(|i| format!("img{i}")).collect();
        let centers: Vec<(u32, f64, f64)> = (0..10).map(|c| (c, 32.0, 32.0)).collect();
        let truth: Vec<LabelBundle> = ids.iter().map(|id| disk_bundle(id, &centers)).collect();
        let cfg = StubConfig { seed: 11, center_jitter_px: sigma, ..Default::default() };
        let stub = StubBackend::new(cfg, SIDE, truth).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for id in &ids {
            for d in stub.detect(&blank(id)).unwrap() {
                let c = d.bbox.center();
                total += (c.x - 32.0).hypot(c.y - 32.0);
                n += 1;
                assert!((d.confidence - 0.9).abs() < 1e-12);
            }
        }
        assert_eq!(n, 1000);
        let mean = total / n as f64;
        let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean - expected).abs() / expected < 0.10, "mean {mean} vs {expected}");
    }

    #[test]
    fn deterministic_per_seed() {
        let truth = disk_bundle("a", &[(0, 20.0, 20.0), (1, 40.0, 30.0)]);
        let cfg = StubConfig { seed: 5, center_jitter_px: 1.5, scale_jitter: 0.2, ..Default::default() };
        let a = StubBackend::new(cfg.clone(), SIDE, [truth.clone()]).unwrap().detect(&blank("a")).unwrap();
        let b = StubBackend::new(cfg, SIDE, [truth]).unwrap().detect(&blank("a")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dilated_disk_iou() {
        let truth = disk_bundle("a", &[(0, 32.0, 32.0)]);
        let cfg = StubConfig { morphology: 1, ..Default::default() };
        let stub = StubBackend::new(cfg, SIDE, [truth.clone()]).unwrap();
        let seg = stub.segment(&blank("a"), truth.boxes[&ClassId(0)], ClassId(0)).unwrap();
        let pred: Vec<bool> = seg.prob_mask.values.iter().map(|&p| p >= 0.5).collect();
        let gt = truth.masks[&ClassId(0)].to_dense().data;
        // brute-force oracle: a pixel is in the dilation when any pixel of
        // its 3x3 neighbourhood is in the disk
        let mut oracle = 0usize;
        for y in 0..SIDE as i64 {
            for x in 0..SIDE as i64 {
                let hit = (-1..=1).any(|dy| (-1..=1).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < SIDE as i64 && ny < SIDE as i64 && gt[(ny * SIDE as i64 + nx) as usize]
                }));
                oracle += hit as usize;
                assert_eq!(pred[(y * SIDE as i64 + x) as usize], hit);
            }
        }
        let gt_area = gt.iter().filter(|&&v| v).count();
        assert_eq!(gt_area, 52);
        // the continuous estimate (7/9)^2 holds up to discretization
        let iou = gt_area as f64 / oracle as f64;
        assert!((iou - 49.0 / 81.0).abs() < 0.03, "iou {iou}");
    }

    #[test]
    fn prompt_outside_is_clipped_empty() {
        let truth = disk_bundle("a", &[(0, 20.0, 20.0)]);
        let stub = StubBackend::new(StubConfig::default(), SIDE, [truth]).unwrap();
        let far = BBox::new(100.0, 100.0, 120.0, 120.0, Frame::Model).unwrap();
        let seg = stub.segment(&blank("a"), far, ClassId(0)).unwrap();
        assert!(seg.clipped_empty);
        assert!(seg.prob_mask.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_size_or_unknown_image() {
        let truth = disk_bundle("a", &[(0, 20.0, 20.0)]);
        let stub = StubBackend::new(StubConfig::default(), SIDE, [truth]).unwrap();
        assert!(matches!(stub.detect(&blank("zzz")), Err(Error::Backend(_))));
        let mut small = blank("a");
        small.width = 32;
        assert!(matches!(stub.detect(&small), Err(Error::Backend(_))));
    }
}
