//! One curation round against an in-process service: accept the stub
//! predictions, move a landmark, mark a patch missing, finalize and
//! export the training pool.
//!
//! cargo run -p pelvimark-review --example review_session

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pelvimark::backend::{StubBackend, StubConfig};
use pelvimark::labelgen::{build_label_bundle, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::pipeline::{run_pipeline, PipelineConfig};
use pelvimark::store::ingest_dataset;
use pelvimark::synth::{synth_dataset, write_synth_dataset, SynthConfig};
use pelvimark_review::{router, AppState, ServiceConfig};

async fn post(app: &axum::Router, uri: &str, body: Value) -> (u16, Value) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let registry = ClassRegistry::schematic();
    let cfg = SynthConfig { n: 1, seed: 5, ..Default::default() };
    let raw = tmp.path().join("raw");
    write_synth_dataset(&raw, &registry, &cfg)?;
    let root = tmp.path().join("store");
    let (store, _) = ingest_dataset(raw.join("dicom"), raw.join("annotations"), raw.join("registry.toml"), &root)?;

    // predictions the reviewer will correct
    let case = synth_dataset(&registry, &cfg)?.remove(0);
    let truth = build_label_bundle(&case.annotations, case.record.geometry(), &registry, &LabelOptions::default())?;
    let stub = StubBackend::new(StubConfig { seed: 1, center_jitter_px: 3.0, ..Default::default() }, 512, [truth])?;
    let pred = run_pipeline(&store.load_image("synth_0000")?, &stub, &registry, &PipelineConfig::default())?;
    std::fs::create_dir_all(root.join("predictions"))?;
    std::fs::write(root.join("predictions/synth_0000.json"), pred.to_json_string(&registry)?)?;
    let a01 = registry.by_code("A01_r").unwrap().class_id;
    let truth_point = case.annotations.landmarks[&a01];

    let app = router(AppState::open(ServiceConfig { data_root: root.clone(), ..Default::default() })?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let mut corrections: Vec<Value> = registry
            .classes()
            .iter()
            .filter(|c| c.code != "A01_r" && c.code != "P02")
            .map(|c| json!({"kind": "accepted", "code": c.code}))
            .collect();
        corrections.push(json!({"kind": "moved", "code": "A01_r", "point": [truth_point.x, truth_point.y]}));
        corrections.push(json!({"kind": "marked_missing", "code": "P02"}));
        let (s, v) = post(&app, "/api/images/synth_0000/corrections", json!({"base_revision": 0, "corrections": corrections})).await;
        println!("corrections: {s}, revision {}, unresolved {}", v["revision"], v["unresolved"]);

        let (s, v) = post(&app, "/api/images/synth_0000/corrections", json!({"base_revision": 0, "corrections": []})).await;
        println!("stale base: {s} {}", v["message"]);

        let (s, v) = post(&app, "/api/images/synth_0000/finalize", json!({"base_revision": 1, "reviewer": "rad1"})).await;
        println!("finalize: {s}, status {}", v["status"]);

        let (s, v) = post(&app, "/api/export/training-pool", json!({})).await;
        println!("export: {s}, {}", v["images"]);
    });
    let labels = std::fs::read_to_string(root.join("pool/labels/boxes/synth_0000.txt"))?;
    println!("first label line: {}", labels.lines().next().unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
