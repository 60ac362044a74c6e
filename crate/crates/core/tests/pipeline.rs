mod common;

use std::collections::BTreeSet;

use common::Fixture;
use pelvimark::backend::{BackendDescriptor, Detection, InferenceBackend, SegmentResult, StubBackend, StubConfig};
use pelvimark::eval::{evaluate, EvalOptions};
use pelvimark::ingest::NormalizedImage;
use pelvimark::model::{BBox, ClassId, ClassRegistry, FeatureKind, Frame, GeometryTransform};
use pelvimark::pipeline::{
    box_center, predictions_to_csv, run_batch, run_pipeline, LandmarkSource, PipelineConfig, PredictionSet,
};
use pelvimark::synth::SynthConfig;
use pelvimark::Error;
use proptest::prelude::*;

fn run_all(fx: &Fixture, stub: &StubBackend, cfg: &PipelineConfig) -> Vec<PredictionSet> {
    fx.cases.iter().map(|c| run_pipeline(&c.record, stub, &fx.registry, cfg).unwrap()).collect()
}

#[test]
fn zero_noise_is_exact() {
    let fx = Fixture::schematic(2, 3);
    let preds = run_all(&fx, &fx.stub(StubConfig::default()), &PipelineConfig::default());
    for p in &preds {
        assert!(p.missing.is_empty(), "{:?}", p.missing);
        assert_eq!(p.landmarks.len(), 72);
        assert_eq!(p.masks.len(), 18);
    }
    let report = evaluate(&preds, &fx.truths(), &fx.registry, &EvalOptions::default()).unwrap();
    for c in &report.classes {
        assert!(c.errors_mm.iter().all(|&e| e == 0.0), "{}", c.code);
        assert!(c.ious.iter().all(|&v| v == 1.0), "{}", c.code);
        assert!(c.box_ious.iter().all(|&v| v == 1.0), "{}", c.code);
        assert_eq!(c.identified, c.total);
    }
    report.verify().unwrap();
}

#[test]
fn dropped_classes_are_missing() {
    let fx = Fixture::schematic(1, 4);
    let reg = &fx.registry;
    let drop: BTreeSet<ClassId> =
        ["A01_r", "A07_l", "F10_r", "F22_l", "A18_r"].iter().map(|c| reg.by_code(c).unwrap().class_id).collect();
    let stub = fx.stub(StubConfig { drop: drop.clone(), ..Default::default() });
    let p = run_pipeline(&fx.cases[0].record, &stub, reg, &PipelineConfig::default()).unwrap();
    assert_eq!(p.missing, drop);
    let identified = p.landmarks.len();
    assert_eq!(identified, 67);
    assert!((identified as f64 / 72.0 - 0.931).abs() < 1e-3);
}

#[test]
fn jitter_error_matches_rayleigh_mean() {
    let fx = Fixture::schematic(14, 5);
    let stub = fx.stub(StubConfig { seed: 9, center_jitter_px: 2.0, ..Default::default() });
    let preds = run_all(&fx, &stub, &PipelineConfig::default());
    let report = evaluate(&preds, &fx.truths(), &fx.registry, &EvalOptions::default()).unwrap();
    let errors: Vec<f64> = report.classes.iter().flat_map(|c| c.errors_mm.clone()).collect();
    assert!(errors.len() >= 1000);
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let expected = 2.0 * 0.5 * (std::f64::consts::PI / 2.0).sqrt();
    assert!((mean - expected).abs() / expected < 0.10, "mean {mean}");
}

#[test]
fn degradation_is_monotone_in_sigma() {
    let fx = Fixture::new(ClassRegistry::schematic(), SynthConfig { n: 14, seed: 6, ..Default::default() });
    let truths = fx.truths();
    let mut last = -1.0;
    for sigma in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let stub = fx.stub(StubConfig { seed: 2, center_jitter_px: sigma, ..Default::default() });
        let preds = run_all(&fx, &stub, &PipelineConfig::default());
        let r = evaluate(&preds, &truths, &fx.registry, &EvalOptions::default()).unwrap();
        let mean = r.overall.error_mm.unwrap().mean;
        assert!(mean > last, "sigma {sigma}: {mean} <= {last}");
        last = mean;
    }
}

#[test]
fn completeness_under_random_drops() {
    let fx = Fixture::schematic(1, 8);
    let all: Vec<ClassId> = fx.registry.ids().collect();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(24));
    runner
        .run(&proptest::sample::subsequence(all.clone(), 0..all.len()), |drop| {
            let stub = fx.stub(StubConfig { drop: drop.iter().copied().collect(), ..Default::default() });
            let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &PipelineConfig::default()).unwrap();
            let mut seen: Vec<ClassId> =
                p.landmarks.keys().chain(p.masks.keys()).chain(p.missing.iter()).copied().collect();
            seen.sort();
            prop_assert_eq!(&seen, &all);
            prop_assert_eq!(p.missing.iter().copied().collect::<Vec<_>>(), drop);
            Ok(())
        })
        .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn box_center_commutes_with_transforms(
        sx in 0.05f64..8.0, sy in 0.05f64..8.0, px in -500.0f64..500.0, py in -500.0f64..500.0,
        x in -1000.0f64..1000.0, y in -1000.0f64..1000.0, w in 0.01f64..300.0, h in 0.01f64..300.0,
    ) {
        let t = GeometryTransform::new(sx, sy, px, py).unwrap();
        let b = BBox::new(x, y, x + w, y + h, Frame::Model).unwrap();
        let a = t.to_original_frame(box_center(&b)).unwrap();
        let c = box_center(&t.box_to_original(b).unwrap());
        prop_assert!((a.x - c.x).abs() < 1e-9 && (a.y - c.y).abs() < 1e-9);
    }
}

#[test]
fn mask_area_is_conserved_through_letterbox() {
    // 1024 px images at half the model scale
    let fx = Fixture::new(ClassRegistry::schematic(), SynthConfig { n: 1, seed: 3, width: 1024, height: 1024, spacing_mm: 0.25, ..Default::default() });
    let stub = fx.stub(StubConfig::default());
    let truth = pelvimark::labelgen::build_label_bundle(&fx.cases[0].annotations, fx.cases[0].record.geometry(), &fx.registry, &fx.opts).unwrap();
    let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &PipelineConfig::default()).unwrap();
    let mut checked = 0;
    for (c, m) in &p.masks {
        let model_area = truth.masks[c].area() as f64;
        if model_area < 100.0 {
            continue;
        }
        let expected = model_area / (truth.transform.scale_x * truth.transform.scale_y);
        let got = m.mask.area() as f64;
        assert!((got - expected).abs() / expected <= 0.02, "{c}: {got} vs {expected}");
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn mask_centroid_source_matches_box_on_disks() {
    let fx = Fixture::schematic(1, 2);
    let stub = fx.stub(StubConfig::default());
    let cfg = PipelineConfig { landmark_source: LandmarkSource::MaskCentroid, ..Default::default() };
    let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &cfg).unwrap();
    for (c, l) in &p.landmarks {
        let gt = fx.cases[0].annotations.landmarks[c];
        assert!((l.point.x - gt.x).abs() < 1e-9 && (l.point.y - gt.y).abs() < 1e-9);
    }
}

#[test]
fn low_confidence_detections_are_ignored() {
    let fx = Fixture::schematic(1, 2);
    // three corruptions at penalty 0.3 leave confidence 0.1
    let stub = fx.stub(StubConfig { center_jitter_px: 0.1, scale_jitter: 0.01, morphology: 1, confidence_penalty: 0.3, ..Default::default() });
    let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &PipelineConfig::default()).unwrap();
    assert_eq!(p.missing.len(), 90);
    let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &PipelineConfig { confidence_threshold: 0.05, ..Default::default() }).unwrap();
    assert!(p.missing.is_empty());
}

/// Replays another backend's raw outputs under a different identity.
struct Replay<'a> {
    inner: &'a dyn InferenceBackend,
    desc: BackendDescriptor,
}

impl InferenceBackend for Replay<'_> {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }
    fn detect(&self, img: &NormalizedImage) -> pelvimark::Result<Vec<Detection>> {
        self.inner.detect(img)
    }
    fn segment(&self, img: &NormalizedImage, prompt: BBox, class_id: ClassId) -> pelvimark::Result<SegmentResult> {
        self.inner.segment(img, prompt, class_id)
    }
}

#[test]
fn batch_is_order_independent_and_backend_agnostic() {
    let fx = Fixture::schematic(4, 11);
    let stub = fx.stub(StubConfig { seed: 1, center_jitter_px: 1.0, morphology: -1, ..Default::default() });
    let mut desc = stub.descriptor().clone();
    desc.name = "replay".into();
    desc.concurrent = false;
    let replay = Replay { inner: &stub, desc };
    let mut ids: Vec<String> = fx.cases.iter().map(|c| c.record.id.clone()).collect();
    ids.reverse();
    ids.push("ghost".into());
    let load = |id: &str| {
        fx.cases
            .iter()
            .find(|c| c.record.id == id)
            .map(|c| c.record.clone())
            .ok_or_else(|| Error::Validation(format!("no image {id}")))
    };
    let cfg = PipelineConfig::default();
    let a = run_batch(&ids, load, &stub, &fx.registry, &cfg, 1).unwrap();
    let b = run_batch(&ids, load, &replay, &fx.registry, &cfg, 4).unwrap();
    let order: Vec<&str> = a.iter().map(|i| i.image_id.as_str()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    for (x, y) in a.iter().zip(&b) {
        match (&x.result, &y.result) {
            (Ok(p), Ok(q)) => assert_eq!(p, q),
            (Err(_), Err(_)) => assert_eq!(x.image_id, "ghost"),
            _ => panic!("outcomes differ for {}", x.image_id),
        }
    }
    assert_eq!(a.iter().filter(|i| i.result.is_ok()).count(), 4);
}

#[test]
fn prediction_json_round_trip_and_csv() {
    let fx = Fixture::schematic(1, 12);
    let stub = fx.stub(StubConfig { seed: 4, center_jitter_px: 1.3, drop: [ClassId(3), ClassId(80)].into(), ..Default::default() });
    let p = run_pipeline(&fx.cases[0].record, &stub, &fx.registry, &PipelineConfig::default()).unwrap();
    let text = p.to_json_string(&fx.registry).unwrap();
    let back = PredictionSet::from_json_str(&text, &fx.registry).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.to_json_string(&fx.registry).unwrap(), text);

    let csv = predictions_to_csv(std::slice::from_ref(&p), &fx.registry).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image_id,class,x_mm,y_mm,confidence");
    assert_eq!(lines.len(), 1 + 71);
    let first = lines[1].split(',').collect::<Vec<_>>();
    let (x, _) = p.landmark_mm(ClassId(0)).unwrap();
    assert_eq!(first[1], "A01_r");
    assert_eq!(first[2], format!("{x:.4}"));

    // a mask class listed as a landmark is refused
    let bad = text.replacen("\"code\": \"A01_r\"", "\"code\": \"O01_r\"", 1);
    assert!(PredictionSet::from_json_str(&bad, &fx.registry).is_err());
}

#[test]
fn uncalibrated_images_report_pixels() {
    let fx = Fixture::schematic(1, 13);
    let mut rec = fx.cases[0].record.clone();
    rec.spacing = None;
    let mut opts = fx.opts.clone();
    opts.fallback_spacing = Some(pelvimark::model::PixelSpacing::isotropic(0.5).unwrap());
    let stub = fx.stub(StubConfig { seed: 1, center_jitter_px: 1.0, ..Default::default() });
    let p = run_pipeline(&rec, &stub, &fx.registry, &PipelineConfig::default()).unwrap();
    assert!(p.landmarks.values().all(|l| !l.calibrated));
    assert!(p.landmark_mm(ClassId(0)).is_none());
    let csv = predictions_to_csv(&[p.clone()], &fx.registry).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",,,"));

    let mut ann = fx.cases[0].annotations.clone();
    ann.landmarks.retain(|c, _| fx.registry.class(*c).unwrap().kind == FeatureKind::Landmark);
    let gt = pelvimark::eval::GroundTruth::build(ann, rec.geometry(), &fx.registry, &opts).unwrap();
    let r = evaluate(&[p], &[gt], &fx.registry, &EvalOptions::default()).unwrap();
    assert_eq!(r.uncalibrated_images, vec![rec.id.clone()]);
    assert!(r.overall.error_mm.is_none());
    assert!(r.classes.iter().filter(|c| c.kind == FeatureKind::Landmark).all(|c| c.errors_px.len() == 1));
}
