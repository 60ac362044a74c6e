//! Rasterizes one annotated image into per-class masks and writes the
//! detector label lines for boxes and polygons.
//!
//! cargo run -p pelvimark --example detection_labels

use pelvimark::labelgen::{build_label_bundle, export_detection_labels, LabelFormat, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::synth::{synth_case, SynthConfig};

pub fn run_example() -> pelvimark::Result<()> {
    let registry = ClassRegistry::schematic();
    // 1024x768 so the letterbox transform is not the identity
    let cfg = SynthConfig { width: 1024, height: 768, spacing_mm: 0.25, ..Default::default() };
    let case = synth_case(&registry, &cfg, 0)?;
    let bundle = build_label_bundle(&case.annotations, case.record.geometry(), &registry, &LabelOptions::default())?;
    println!(
        "{} classes on a {}x{} canvas, transform {:?}",
        bundle.masks.len(),
        bundle.width,
        bundle.height,
        bundle.transform
    );

    let boxes = export_detection_labels(&bundle, LabelFormat::Boxes);
    let polygons = export_detection_labels(&bundle, LabelFormat::Polygons);
    for line in boxes.text.lines().take(3) {
        println!("box     {line}");
    }
    let first = polygons.text.lines().next().unwrap_or_default();
    println!("polygon {}...", &first[..first.len().min(60)]);
    assert_eq!(boxes.text.lines().count(), 90);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
