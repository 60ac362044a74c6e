//! Detect-then-segment over one radiograph with the stub backend, once
//! clean and once with box-centre jitter and two dropped classes.
//!
//! cargo run -p pelvimark --example stub_pipeline

use std::collections::BTreeSet;

use pelvimark::backend::{StubBackend, StubConfig};
use pelvimark::labelgen::{build_label_bundle, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::pipeline::{run_pipeline, PipelineConfig};
use pelvimark::synth::{synth_case, SynthConfig};

pub fn run_example() -> pelvimark::Result<()> {
    let registry = ClassRegistry::schematic();
    let case = synth_case(&registry, &SynthConfig::default(), 0)?;
    let opts = LabelOptions::default();
    let truth = build_label_bundle(&case.annotations, case.record.geometry(), &registry, &opts)?;
    let a01 = registry.by_code("A01_r").expect("schematic class").class_id;

    let clean = StubBackend::new(StubConfig::default(), opts.input_side, [truth.clone()])?;
    let p = run_pipeline(&case.record, &clean, &registry, &PipelineConfig::default())?;
    println!("clean: {} landmarks, {} masks, missing {:?}", p.landmarks.len(), p.masks.len(), p.missing);
    println!("A01_r at {:?}, annotated {:?}", p.landmarks[&a01].point, case.annotations.landmarks[&a01]);

    let drop: BTreeSet<_> = ["F12_l", "O08"].iter().map(|c| registry.by_code(c).unwrap().class_id).collect();
    let noisy_cfg = StubConfig { seed: 9, drop, center_jitter_px: 2.0, ..Default::default() };
    let noisy = StubBackend::new(noisy_cfg, opts.input_side, [truth])?;
    let q = run_pipeline(&case.record, &noisy, &registry, &PipelineConfig::default())?;
    let missing: Vec<&str> = q.missing.iter().map(|c| registry.code(*c).unwrap()).collect();
    println!("noisy: A01_r at {:?} (confidence {:.2}), missing {missing:?}", q.landmarks[&a01].point, q.landmarks[&a01].confidence);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
