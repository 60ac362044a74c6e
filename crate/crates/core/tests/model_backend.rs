use std::path::PathBuf;

use pelvimark::backend::{load_model_backend, BackendDescriptor, Capability};
use pelvimark::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn descriptor(side: u32) -> BackendDescriptor {
    BackendDescriptor::new("toy", side, Capability::Both).unwrap()
}

#[test]
fn missing_file_names_path() {
    let err = load_model_backend(fixture("nope.onnx"), fixture("toy_segmenter.onnx"), descriptor(16))
        .err()
        .unwrap();
    assert!(matches!(err, Error::Backend(_)));
    assert!(err.to_string().contains("nope.onnx"), "{err}");
}

#[cfg(not(feature = "onnx"))]
#[test]
fn disabled_without_feature() {
    let err = load_model_backend(fixture("toy_detector.onnx"), fixture("toy_segmenter.onnx"), descriptor(16))
        .err()
        .unwrap();
    assert!(err.to_string().contains("onnx"), "{err}");
}

#[cfg(feature = "onnx")]
mod onnx {
    use super::*;
    use pelvimark::ingest::NormalizedImage;
    use pelvimark::model::{BBox, ClassId, Frame, GeometryTransform};

    fn image() -> NormalizedImage {
        NormalizedImage {
            image_id: "toy".into(),
            width: 16,
            height: 16,
            intensities: (0..256).map(|i| i as u8).collect(),
            transform: GeometryTransform::IDENTITY,
            degenerate: false,
        }
    }

    #[test]
    fn smoke_detect_and_segment() {
        let be = load_model_backend(fixture("toy_detector.onnx"), fixture("toy_segmenter.onnx"), descriptor(16)).unwrap();
        let dets = be.detect(&image()).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].class_id, ClassId(0));
        assert_eq!(dets[0].bbox, BBox::new(2.0, 2.0, 6.0, 6.0, Frame::Model).unwrap());
        assert!((dets[1].confidence - 0.4).abs() < 1e-6);

        let seg = be.segment(&image(), dets[0].bbox, ClassId(0)).unwrap();
        assert!(!seg.clipped_empty);
        for (i, p) in seg.prob_mask.values.iter().enumerate() {
            assert!((p - i as f32 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_load_error() {
        let err = load_model_backend(fixture("toy_detector.onnx"), fixture("toy_segmenter_side8.onnx"), descriptor(16))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Backend(_)));
        assert!(err.to_string().contains("toy_segmenter_side8.onnx"), "{err}");
    }
}
