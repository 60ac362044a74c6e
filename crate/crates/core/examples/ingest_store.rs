//! Writes a small synthetic DICOM dataset and ingests it into a store.
//!
//! cargo run -p pelvimark --example ingest_store

use pelvimark::model::ClassRegistry;
use pelvimark::store::ingest_dataset;
use pelvimark::synth::{write_synth_dataset, SynthConfig};

pub fn run_example() -> pelvimark::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let raw = tmp.path().join("raw");
    let registry = ClassRegistry::schematic();
    write_synth_dataset(&raw, &registry, &SynthConfig { n: 3, seed: 1, ..Default::default() })?;

    let (store, report) =
        ingest_dataset(raw.join("dicom"), raw.join("annotations"), raw.join("registry.toml"), tmp.path().join("store"))?;
    println!("ingested {:?}", report.ingested);
    for e in store.index()?.images {
        let s = e.spacing.expect("synthetic images are calibrated");
        println!("{}: {}x{} px, {} bit, {} x {} mm/px", e.id, e.width, e.height, e.bit_depth, s.row_mm, s.col_mm);
    }
    let rec = store.load_image("synth_0000")?;
    assert_eq!(rec.pixels.len(), 512 * 512);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
