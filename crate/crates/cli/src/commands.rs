use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use pelvimark::backend::{load_model_backend, BackendDescriptor, Capability, InferenceBackend, StubBackend, StubConfig};
use pelvimark::eval::{emit_report, evaluate as score, EvalOptions, GroundTruth, ReportFormat, StdKind};
use pelvimark::labelgen::{build_label_bundle, export_detection_labels, split_dataset, LabelFormat, LabelOptions, SplitCounts};
use pelvimark::model::{ClassRegistry, PixelSpacing, Split};
use pelvimark::pipeline::{predictions_to_csv, run_batch, LandmarkSource, PipelineConfig, PredictionSet};
use pelvimark::store::{ingest_dataset, Store};
use pelvimark::synth::{write_synth_dataset, SynthConfig};
use pelvimark::{Error, ErrorKind};

use crate::config::{RunConfig, SourceArg, StdArg};
use crate::{BackendArg, CliError, EvaluateArgs, IngestArgs, LabelArgs, PredictArgs, ServeArgs, SplitArg, SplitArgs, SynthArgs};

pub const PARTIAL_MARKER: &str = "PARTIAL.json";

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io { path: path.to_path_buf(), source: e })
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| io(d, e))?;
    }
    fs::write(path, text).map_err(|e| io(path, e))
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
}

fn spacing(mm: Option<f64>) -> Result<Option<PixelSpacing>, CliError> {
    mm.map(PixelSpacing::isotropic).transpose().map_err(CliError::from)
}

fn label_options(
    cfg: &RunConfig,
    input_side: Option<u32>,
    radius: Option<f64>,
    stroke: Option<f64>,
    fallback: Option<f64>,
) -> Result<LabelOptions, CliError> {
    Ok(LabelOptions {
        landmark_radius_mm: radius.unwrap_or(cfg.labels.landmark_radius_mm),
        stroke_mm: stroke.unwrap_or(cfg.labels.stroke_mm),
        input_side: input_side.unwrap_or(cfg.labels.input_side),
        fallback_spacing: spacing(fallback.or(cfg.labels.fallback_spacing_mm))?,
    })
}

/// Store ids restricted to one split. Asking for a split without a
/// manifest is an error.
fn select_ids(store: &Store, split: SplitArg) -> Result<Vec<(String, Split)>, CliError> {
    let manifest = store.read_split()?;
    let wanted = match split {
        SplitArg::All => None,
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
    };
    if wanted.is_some() && manifest.is_none() {
        return Err(CliError::Usage(format!("{} has no split manifest; run `split` first", store.root().display())));
    }
    Ok(store
        .ids()?
        .into_iter()
        .map(|id| {
            let s = manifest.as_ref().and_then(|m| m.get(&id)).unwrap_or_default();
            (id, s)
        })
        .filter(|(_, s)| wanted.is_none_or(|w| w == *s))
        .collect())
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let registry = if a.pilot { ClassRegistry::pilot() } else { ClassRegistry::schematic() };
    let cfg = SynthConfig {
        n: a.n,
        seed: a.seed,
        width: a.width,
        height: a.height,
        spacing_mm: a.spacing_mm,
        ..Default::default()
    };
    let ids = write_synth_dataset(&a.out, &registry, &cfg)?;
    print_json(json!({
        "images": ids.len(),
        "dicom": a.out.join("dicom"),
        "annotations": a.out.join("annotations"),
        "registry": a.out.join("registry.toml"),
    }));
    Ok(())
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let (store, report) = ingest_dataset(&a.dicom_dir, &a.annotations_dir, &a.registry, &a.store)?;
    print_json(json!({
        "store": store.root(),
        "ingested": report.ingested.len(),
        "uncalibrated": report.uncalibrated.len(),
        "unannotated": report.unannotated.len(),
        "problems": report.problems.len(),
        "feature_issues": report.features.len(),
        "report": store.root().join("ingest_report.json"),
    }));
    if report.ingested.is_empty() {
        return Err(CliError::Core(Error::Validation("no image could be ingested".into())));
    }
    Ok(())
}

pub fn split(a: SplitArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = a.seed.or(cfg.seed).ok_or_else(|| CliError::Usage("split needs --seed".into()))?;
    let store = Store::open(&a.store)?;
    let counts = SplitCounts::parse(&a.counts)?;
    let manifest = split_dataset(&store.ids()?, counts, seed)?;
    store.write_split(&manifest)?;
    print_json(json!({
        "manifest": store.split_path(),
        "train": manifest.ids_in(Split::Train).len(),
        "val": manifest.ids_in(Split::Val).len(),
        "test": manifest.ids_in(Split::Test).len(),
    }));
    Ok(())
}

pub fn labels(a: LabelArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let store = Store::open(&a.store)?;
    let registry = store.registry()?;
    let opts = label_options(cfg, a.input_side, a.landmark_radius_mm, a.stroke_mm, a.fallback_spacing_mm)?;
    let index = store.index()?;
    let ids = select_ids(&store, a.split)?;
    let out = store.labels_dir();
    if out.exists() {
        fs::remove_dir_all(&out).map_err(|e| io(&out, e))?;
    }
    let results: Vec<Result<Option<serde_json::Value>, CliError>> = ids
        .par_iter()
        .map(|(id, split)| {
            let Some(set) = store.load_annotations(id, &registry)? else { return Ok(None) };
            let entry = index.images.iter().find(|e| &e.id == id).expect("indexed id");
            let geometry = pelvimark::model::ImageGeometry { width: entry.width, height: entry.height, spacing: entry.spacing };
            let mut bundle = build_label_bundle(&set, geometry, &registry, &opts)?;
            bundle.split = *split;
            let mut warnings = Vec::new();
            for (fmt, sub) in [(LabelFormat::Boxes, "boxes"), (LabelFormat::Polygons, "polygons")] {
                let file = export_detection_labels(&bundle, fmt);
                warnings.extend(file.warnings);
                write(&out.join(split.as_str()).join(sub).join(format!("{id}.txt")), file.text)?;
            }
            let skipped: Vec<String> = bundle.skipped.iter().map(|(_, why)| why.clone()).collect();
            Ok(Some(json!({
                "image_id": id,
                "split": split.as_str(),
                "classes": bundle.masks.len(),
                "skipped": skipped,
                "warnings": warnings,
            })))
        })
        .collect();
    let mut images = Vec::new();
    for r in results {
        if let Some(v) = r? {
            images.push(v);
        }
    }
    let manifest = json!({ "input_side": opts.input_side, "images": images });
    write(&out.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json value") + "\n")?;
    print_json(json!({ "labels": out, "images": images.len() }));
    Ok(())
}

fn stub_backend(
    a: &PredictArgs,
    cfg: &RunConfig,
    store: &Store,
    registry: &ClassRegistry,
    ids: &[(String, Split)],
    input_side: u32,
) -> Result<StubBackend, CliError> {
    let s = &cfg.stub;
    let mut drop = BTreeSet::new();
    for code in a.drop.clone().unwrap_or_else(|| s.drop.clone()) {
        let fc = registry
            .by_code(code.trim())
            .ok_or_else(|| CliError::Usage(format!("--drop: unknown class '{code}'")))?;
        drop.insert(fc.class_id);
    }
    let stub = StubConfig {
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        drop,
        center_jitter_px: a.jitter_px.unwrap_or(s.center_jitter_px),
        scale_jitter: a.scale_jitter.unwrap_or(s.scale_jitter),
        morphology: a.morphology.unwrap_or(s.morphology),
        confidence_penalty: a.confidence_penalty.unwrap_or(s.confidence_penalty),
    };
    let stochastic = stub.center_jitter_px > 0.0 || stub.scale_jitter > 0.0;
    if stochastic && a.seed.or(cfg.seed).is_none() {
        return Err(CliError::Usage("stub jitter is random; pass --seed".into()));
    }
    let opts = label_options(cfg, Some(input_side), None, None, a.fallback_spacing_mm)?;
    let index = store.index()?;
    let truth: Vec<_> = ids
        .par_iter()
        .map(|(id, _)| -> Result<_, CliError> {
            let Some(set) = store.load_annotations(id, registry)? else { return Ok(None) };
            let e = index.images.iter().find(|e| &e.id == id).expect("indexed id");
            let geometry = pelvimark::model::ImageGeometry { width: e.width, height: e.height, spacing: e.spacing };
            Ok(Some(build_label_bundle(&set, geometry, registry, &opts)?))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(StubBackend::new(stub, input_side, truth)?)
}

pub fn predict(a: PredictArgs, cfg: &RunConfig, jobs: usize) -> Result<(), CliError> {
    let store = Store::open(&a.store)?;
    let registry = store.registry()?;
    if a.out.exists() && fs::read_dir(&a.out).map_err(|e| io(&a.out, e))?.next().is_some() {
        return Err(CliError::Usage(format!("{} is not empty", a.out.display())));
    }
    let input_side = a.input_side.unwrap_or(cfg.labels.input_side);
    let pipeline = PipelineConfig {
        confidence_threshold: a.confidence_threshold.unwrap_or(cfg.pipeline.confidence_threshold),
        mask_threshold: a.mask_threshold.unwrap_or(cfg.pipeline.mask_threshold),
        landmark_source: match a.landmark_source.unwrap_or(cfg.pipeline.landmark_source) {
            SourceArg::Box => LandmarkSource::Box,
            SourceArg::Centroid => LandmarkSource::MaskCentroid,
        },
    };
    pipeline.validate()?;
    let ids = select_ids(&store, a.split)?;
    let backend: Box<dyn InferenceBackend> = match a.backend {
        BackendArg::Stub => Box::new(stub_backend(&a, cfg, &store, &registry, &ids, input_side)?),
        BackendArg::Model => {
            let (Some(det), Some(seg)) = (&a.detector, &a.segmenter) else {
                return Err(CliError::Usage("--backend model needs --detector and --segmenter".into()));
            };
            let desc = BackendDescriptor::new("onnx", input_side, Capability::Both)?;
            load_model_backend(det, seg, desc)?
        }
    };
    let only_ids: Vec<String> = ids.into_iter().map(|(id, _)| id).collect();
    let items = run_batch(&only_ids, |id| store.load_image(id), backend.as_ref(), &registry, &pipeline, jobs)?;
    fs::create_dir_all(&a.out).map_err(|e| io(&a.out, e))?;
    let mut sets: Vec<PredictionSet> = Vec::new();
    let mut failed: Vec<(String, String, ErrorKind)> = Vec::new();
    for item in items {
        match item.result {
            Ok(p) => {
                write(&a.out.join(format!("{}.json", p.image_id)), p.to_json_string(&registry)?)?;
                sets.push(p);
            }
            Err(e) => failed.push((item.image_id, e.to_string(), e.kind())),
        }
    }
    write(&a.out.join("predictions.csv"), predictions_to_csv(&sets, &registry)?)?;
    if !failed.is_empty() {
        let marker = a.out.join(PARTIAL_MARKER);
        let doc = json!({
            "written": sets.len(),
            "failed": failed.iter().map(|(id, e, _)| json!({"image_id": id, "error": e})).collect::<Vec<_>>(),
        });
        write(&marker, serde_json::to_string_pretty(&doc).expect("json value") + "\n")?;
        let kind = if failed.iter().any(|f| f.2 == ErrorKind::Backend) { ErrorKind::Backend } else { failed[0].2 };
        return Err(CliError::Partial { kind, failed: failed.into_iter().map(|(i, e, _)| (i, e)).collect(), marker });
    }
    print_json(json!({ "predictions": a.out, "images": sets.len(), "backend": backend.descriptor().name }));
    Ok(())
}

pub fn evaluate(a: EvaluateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    if a.predictions.join(PARTIAL_MARKER).exists() && !a.allow_partial {
        return Err(CliError::Usage(format!(
            "{} holds partial predictions; pass --allow-partial to score them anyway",
            a.predictions.display()
        )));
    }
    let store = Store::open(&a.store)?;
    let registry = store.registry()?;
    let index = store.index()?;
    let mut files: Vec<_> = fs::read_dir(&a.predictions)
        .map_err(|e| io(&a.predictions, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != PARTIAL_MARKER))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no prediction files in {}", a.predictions.display())));
    }
    let opts = label_options(cfg, None, None, None, a.fallback_spacing_mm)?;
    let loaded: Vec<(PredictionSet, GroundTruth)> = files
        .par_iter()
        .map(|p| -> Result<_, CliError> {
            let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
            let pred = PredictionSet::from_json_str(&text, &registry)?;
            let id = pred.image_id.clone();
            let entry = index
                .images
                .iter()
                .find(|e| e.id == id)
                .ok_or_else(|| Error::Validation(format!("{}: image {id} is not in the store", p.display())))?;
            let set = store
                .load_annotations(&id, &registry)?
                .ok_or_else(|| Error::Validation(format!("image {id} has no annotations to score against")))?;
            let geometry = pelvimark::model::ImageGeometry { width: entry.width, height: entry.height, spacing: entry.spacing };
            Ok((pred, GroundTruth::build(set, geometry, &registry, &opts)?))
        })
        .collect::<Result<_, _>>()?;
    let (preds, truths): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let eval_opts = EvalOptions {
        std_kind: match a.std.unwrap_or(cfg.report.std) {
            StdArg::Population => StdKind::Population,
            StdArg::Sample => StdKind::Sample,
        },
        acceptability_mm: a.acceptability_mm.unwrap_or(cfg.report.acceptability_mm),
    };
    let report = score(&preds, &truths, &registry, &eval_opts)?;
    for format in ReportFormat::ALL {
        write(&a.out.join(format!("report.{}", format.extension())), emit_report(&report, format)?)?;
    }
    let md = emit_report(&report, ReportFormat::Markdown)?;
    if let Some(summary) = md.split("## Summary").nth(1) {
        let summary = summary.split("\n## ").next().unwrap_or_default();
        println!("{}", summary.trim());
    }
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = pelvimark_review::ServiceConfig::from_env(a.service_config.as_deref())?;
    if let Some(s) = a.store {
        config.data_root = s;
    }
    if let Some(p) = a.port {
        config.port = p;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Service(pelvimark_review::ServiceError::Config(e.to_string())))?;
    rt.block_on(pelvimark_review::serve(config))?;
    Ok(())
}
