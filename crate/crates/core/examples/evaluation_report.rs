//! Scores stub predictions against ground truth and prints the markdown
//! summary.
//!
//! cargo run -p pelvimark --example evaluation_report

use pelvimark::backend::{StubBackend, StubConfig};
use pelvimark::eval::{emit_report, evaluate, EvalOptions, GroundTruth, ReportFormat};
use pelvimark::labelgen::{build_label_bundle, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::pipeline::{run_pipeline, PipelineConfig};
use pelvimark::synth::{synth_dataset, SynthConfig};

pub fn run_example() -> pelvimark::Result<()> {
    let registry = ClassRegistry::schematic();
    let cases = synth_dataset(&registry, &SynthConfig { n: 4, seed: 3, ..Default::default() })?;
    let opts = LabelOptions::default();
    let bundles = cases
        .iter()
        .map(|c| build_label_bundle(&c.annotations, c.record.geometry(), &registry, &opts))
        .collect::<pelvimark::Result<Vec<_>>>()?;
    let stub = StubBackend::new(StubConfig { seed: 1, center_jitter_px: 2.0, morphology: -1, ..Default::default() }, 512, bundles)?;

    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for c in &cases {
        preds.push(run_pipeline(&c.record, &stub, &registry, &PipelineConfig::default())?);
        truths.push(GroundTruth::build(c.annotations.clone(), c.record.geometry(), &registry, &opts)?);
    }
    let report = evaluate(&preds, &truths, &registry, &EvalOptions::default())?;
    report.verify()?;
    let md = emit_report(&report, ReportFormat::Markdown)?;
    let summary = md.split("## Per class").next().unwrap_or_default();
    println!("{summary}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
