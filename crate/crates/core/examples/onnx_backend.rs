//! Loads the toy ONNX detector and segmenter and runs them on a blank
//! 16x16 input.
//!
//! cargo run -p pelvimark --features onnx --example onnx_backend

use pelvimark::backend::{load_model_backend, BackendDescriptor, Capability};
use pelvimark::model::{ClassRegistry, ImageRecord, PixelSpacing};
use pelvimark::pipeline::{run_pipeline, PipelineConfig};

pub fn run_example() -> pelvimark::Result<()> {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let desc = BackendDescriptor::new("onnx", 16, Capability::Both)?;
    let backend = load_model_backend(fixtures.join("toy_detector.onnx"), fixtures.join("toy_segmenter.onnx"), desc)?;
    let pixels = (0..256).map(|i| (i % 16) as u16 * 64).collect();
    let rec = ImageRecord::new("toy", 16, 16, 10, pixels, Some(PixelSpacing::isotropic(1.0)?))?;
    let preds = run_pipeline(&rec, backend.as_ref(), &ClassRegistry::pilot(), &PipelineConfig::default())?;
    for (c, l) in &preds.landmarks {
        println!("class {c}: ({:.1}, {:.1}) confidence {:.2}", l.point.x, l.point.y, l.confidence);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
