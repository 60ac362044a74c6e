mod common;

use std::collections::BTreeMap;
use std::path::Path;

use axum::http::StatusCode;
use serde_json::{json, Value};

use common::{accept_all, build_store, call, get, post};
use pelvimark::labelgen::parse_box_labels;
use pelvimark::model::ClassRegistry;
use pelvimark_review::{router, AppState, ServiceConfig};

const ID: &str = "synth_0000";

fn app(cfg: &ServiceConfig) -> (AppState, axum::Router) {
    let state = AppState::open(cfg.clone()).unwrap();
    (state.clone(), router(state))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn predicted_point(cfg: &ServiceConfig, code: &str) -> [f64; 2] {
    let text = std::fs::read_to_string(cfg.predictions_path().join(format!("{ID}.json"))).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let l = v["landmarks"].as_array().unwrap().iter().find(|l| l["code"] == code).unwrap();
    [l["x"].as_f64().unwrap(), l["y"].as_f64().unwrap()]
}

#[tokio::test]
async fn listing_registry_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 3);
    let (_, app) = app(&cfg);

    let r = get(&app, "/api/images?page=1&per_page=2").await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["total"], 3);
    assert_eq!(v["images"].as_array().unwrap().len(), 2);
    assert_eq!(v["images"][0]["status"], "pending");
    assert_eq!(get(&app, "/api/images?page=2&per_page=2").await.json()["images"].as_array().unwrap().len(), 1);
    assert_eq!(get(&app, "/api/images?page=0").await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let reg = get(&app, "/api/registry").await.json();
    assert_eq!(reg["classes"].as_array().unwrap().len(), 90);
    assert_eq!(reg["classes"][0]["code"], "A01_r");

    for frame in ["original", "model"] {
        let r = get(&app, &format!("/api/images/{ID}/render?frame={frame}")).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.content_type.as_deref(), Some("image/png"));
        assert_eq!(&r.bytes[1..4], b"PNG");
    }
    assert_eq!(get(&app, &format!("/api/images/{ID}/render?frame=sideways")).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let p = get(&app, &format!("/api/images/{ID}/predictions")).await;
    assert_eq!(p.status, StatusCode::OK);
    assert_eq!(p.json()["landmarks"].as_array().unwrap().len(), 72);
}

#[tokio::test]
async fn unknown_image_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 1);
    let (_, app) = app(&cfg);
    for uri in ["/api/images/nope/review", "/api/images/nope/predictions", "/api/images/nope/render"] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(r.json()["error"], "not_found");
    }
    let r = post(&app, "/api/images/nope/corrections", json!({"base_revision": 0, "corrections": []})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_corrections_name_their_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 1);
    let (_, app) = app(&cfg);
    let body = json!({
        "base_revision": 0,
        "corrections": [
            {"kind": "moved", "code": "A01_r", "point": [100000.0, 5.0]},
            {"kind": "moved", "code": "O08", "point": [5.0, 5.0]},
            {"kind": "accepted", "code": "Z99"},
            {"kind": "teleported", "code": "A02_r"}
        ]
    });
    let r = post(&app, &format!("/api/images/{ID}/corrections"), body).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<String> =
        r.json()["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap().to_string()).collect();
    assert_eq!(fields, ["corrections[0].point", "corrections[1].kind", "corrections[2].code", "corrections[3]"]);
    // nothing was written
    assert_eq!(get(&app, &format!("/api/images/{ID}/review")).await.json()["revision"], 0);
}

#[tokio::test]
async fn stale_base_conflicts_and_replay_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 1);
    let (state, app) = app(&cfg);
    let uri = format!("/api/images/{ID}/corrections");
    let body = json!({"base_revision": 0, "reviewer": "r1", "corrections": [{"kind": "marked_missing", "code": "P02"}]});

    let first = post(&app, &uri, body.clone()).await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.json()["revision"], 1);
    assert_eq!(first.json()["status"], "in_review");

    let again = post(&app, &uri, body.clone()).await;
    assert_eq!(again.status, StatusCode::OK);
    assert_eq!(again.json()["revision"], 1);
    assert_eq!(state.reviews().revisions(ID).unwrap(), vec![1]);

    let other = json!({"base_revision": 0, "reviewer": "r1", "corrections": [{"kind": "marked_missing", "code": "O08"}]});
    let r = post(&app, &uri, other).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["current_revision"], 1);

    let r = post(&app, &format!("/api/images/{ID}/finalize"), json!({"base_revision": 0})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn finalize_lists_unresolved_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 1);
    let (state, app) = app(&cfg);
    let corrections = accept_all(state.registry(), &["F12_l"]);
    let r = post(&app, &format!("/api/images/{ID}/corrections"), json!({"base_revision": 0, "corrections": corrections})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["unresolved"], json!(["F12_l"]));
    let r = post(&app, &format!("/api/images/{ID}/finalize"), json!({"base_revision": 1})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["unresolved"], json!(["F12_l"]));
    assert_eq!(state.record(ID).unwrap().revision, 1);
}

#[tokio::test]
async fn moved_landmark_flows_into_the_pool() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 2);
    let (state, app) = app(&cfg);
    let [x, y] = predicted_point(&cfg, "A01_r");
    let moved = [x + 2.0, y - 3.0];
    let mut corrections = accept_all(state.registry(), &["A01_r"]);
    corrections.push(json!({"kind": "moved", "code": "A01_r", "point": moved}));
    let r = post(&app, &format!("/api/images/{ID}/corrections"), json!({"base_revision": 0, "corrections": corrections})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    let r = post(&app, &format!("/api/images/{ID}/finalize"), json!({"base_revision": 1, "reviewer": "r2"})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["status"], "curated");
    assert_eq!(r.json()["revision"], 2);

    let r = post(&app, "/api/export/training-pool", json!({})).await;
    assert_eq!(r.status, StatusCode::OK);
    let manifest = r.json();
    assert_eq!(manifest["images"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["images"][0]["image_id"], ID);
    assert_eq!(manifest["images"][0]["features"], 90);

    let pool = cfg.pool_path();
    let reg = ClassRegistry::schematic();
    let text = std::fs::read_to_string(pool.join("annotations").join(format!("{ID}.json"))).unwrap();
    let load = pelvimark::ingest::AnnotationSet::from_json_str(&text, &reg).unwrap();
    assert!(load.rejected.is_empty());
    let set = load.set;
    let p = set.landmarks[&reg.by_code("A01_r").unwrap().class_id];
    assert_eq!([p.x, p.y], moved);

    // 512 px image, 512 px model input: the regenerated 2 mm disk at
    // 0.5 mm/px is 8 px wide and centred on the moved point
    let boxes = parse_box_labels(&std::fs::read_to_string(pool.join("labels/boxes").join(format!("{ID}.txt"))).unwrap()).unwrap();
    let (_, b) = boxes.iter().find(|(c, _)| c.0 == 0).unwrap();
    let near = |a: f64, e: f64| (a - e).abs() < 1e-6;
    assert!(near(b[0], moved[0] / 512.0) && near(b[1], moved[1] / 512.0), "{b:?}");
    assert!(near(b[2], 8.0 / 512.0) && near(b[3], 8.0 / 512.0));
    assert_eq!(boxes.len(), 90);
    assert!(pool.join("labels/polygons").join(format!("{ID}.txt")).is_file());
    assert!(pool.join("registry.toml").is_file());
}

#[tokio::test]
async fn export_is_byte_identical_and_empty_pool_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 2);
    let (state, app) = app(&cfg);

    let r = post(&app, "/api/export/training-pool", json!({})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["images"], json!([]));
    assert!(cfg.pool_path().join("manifest.json").is_file());

    let mut corrections = accept_all(state.registry(), &["P02"]);
    corrections.push(json!({"kind": "marked_missing", "code": "P02"}));
    post(&app, &format!("/api/images/{ID}/corrections"), json!({"base_revision": 0, "corrections": corrections})).await;
    assert_eq!(post(&app, &format!("/api/images/{ID}/finalize"), json!({"base_revision": 1})).await.status, StatusCode::OK);

    post(&app, "/api/export/training-pool", json!({})).await;
    let first = tree(&cfg.pool_path());
    post(&app, "/api/export/training-pool", json!({})).await;
    assert_eq!(first, tree(&cfg.pool_path()));
    let m: Value = serde_json::from_slice(&first["manifest.json"]).unwrap();
    assert_eq!(m["images"][0]["missing"], json!(["P02"]));
    assert_eq!(m["images"][0]["features"], 89);

    // a fresh service over the same files exports the same pool
    let (_, app2) = self::app(&cfg);
    post(&app2, "/api/export/training-pool", json!({})).await;
    assert_eq!(first, tree(&cfg.pool_path()));
}

#[tokio::test]
async fn crash_between_revision_and_head_recovers_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path(), 1);
    let uri = format!("/api/images/{ID}/corrections");
    {
        let (state, app) = app(&cfg);
        let r = post(&app, &uri, json!({"base_revision": 0, "corrections": [{"kind": "marked_missing", "code": "P02"}]})).await;
        assert_eq!(r.status, StatusCode::OK);
        state.reviews().inject_crash_after_revision_write();
        let r = post(&app, &uri, json!({"base_revision": 1, "corrections": [{"kind": "marked_missing", "code": "O08"}]})).await;
        assert_eq!(r.status, StatusCode::INTERNAL_SERVER_ERROR);
        // a stray temp file as left by an interrupted write
        std::fs::write(state.reviews().dir().join(ID).join("rev-000003.tmp"), b"{").unwrap();
    }
    let (state, app) = app(&cfg);
    let rec = state.record(ID).unwrap();
    assert_eq!(rec.revision, 2);
    let resolved: Vec<&str> = rec.resolutions.values().map(|r| r.code.as_str()).collect();
    assert_eq!(resolved, ["O08", "P02"]);
    assert!(!state.reviews().dir().join(ID).join("rev-000003.tmp").exists());
    let head = std::fs::read_to_string(state.reviews().head_path(ID)).unwrap();
    assert_eq!(head.trim(), "2");
    let r = post(&app, &uri, json!({"base_revision": 2, "corrections": [{"kind": "marked_missing", "code": "O07_l"}]})).await;
    assert_eq!(r.json()["revision"], 3);
}

#[tokio::test]
async fn token_is_enforced_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig { token: Some("s3cret".into()), ..build_store(dir.path(), 1) };
    let (_, app) = app(&cfg);
    let r = call(&app, "GET", "/api/images", None, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/api/images", None, Some("wrong")).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/api/images", None, Some("s3cret")).await.status, StatusCode::OK);
}
