#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use pelvimark::backend::{StubBackend, StubConfig};
use pelvimark::labelgen::{build_label_bundle, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::pipeline::{run_pipeline, PipelineConfig};
use pelvimark::store::ingest_dataset;
use pelvimark::synth::{synth_dataset, write_synth_dataset, SynthConfig};
use pelvimark_review::ServiceConfig;

/// A store of `n` synthetic images with zero-noise stub predictions.
pub fn build_store(dir: &Path, n: usize) -> ServiceConfig {
    let registry = ClassRegistry::schematic();
    let cfg = SynthConfig { n, seed: 11, ..Default::default() };
    let raw = dir.join("raw");
    write_synth_dataset(&raw, &registry, &cfg).unwrap();
    let root = dir.join("store");
    let (store, _) = ingest_dataset(raw.join("dicom"), raw.join("annotations"), raw.join("registry.toml"), &root).unwrap();

    let opts = LabelOptions::default();
    let cases = synth_dataset(&registry, &cfg).unwrap();
    let truth = cases
        .iter()
        .map(|c| build_label_bundle(&c.annotations, c.record.geometry(), &registry, &opts).unwrap());
    let backend = StubBackend::new(StubConfig::default(), opts.input_side, truth).unwrap();
    let preds = root.join("predictions");
    std::fs::create_dir_all(&preds).unwrap();
    for id in store.ids().unwrap() {
        let rec = store.load_image(&id).unwrap();
        let p = run_pipeline(&rec, &backend, &registry, &PipelineConfig::default()).unwrap();
        std::fs::write(preds.join(format!("{id}.json")), p.to_json_string(&registry).unwrap()).unwrap();
    }
    ServiceConfig { data_root: root, ..Default::default() }
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("x-api-token", t);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, "POST", uri, Some(body), None).await
}

/// `accepted` for every class in the registry except those in `skip`.
pub fn accept_all(registry: &ClassRegistry, skip: &[&str]) -> Vec<Value> {
    registry
        .classes()
        .iter()
        .filter(|c| !skip.contains(&c.code.as_str()))
        .map(|c| serde_json::json!({ "kind": "accepted", "code": c.code }))
        .collect()
}
