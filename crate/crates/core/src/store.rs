//! On-disk dataset layout shared by the command line and the review
//! service.
//!
//! ```text
//! <root>/registry.toml
//! <root>/index.json             image ids, sizes and calibration
//! <root>/ingest_report.json
//! <root>/images/<id>.dcm
//! <root>/annotations/<id>.json  canonical annotation documents
//! <root>/split.txt              optional split manifest
//! <root>/labels/{boxes,polygons}/<id>.txt
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_annotations, load_dicom, AnnotationSet};
use crate::labelgen::SplitManifest;
use crate::model::{load_class_registry, ClassRegistry, ImageRecord, PixelSpacing};

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub spacing: Option<PixelSpacing>,
    pub annotated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub schema_version: u32,
    pub images: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIssue {
    pub image_id: String,
    pub container: String,
    pub index: Option<usize>,
    pub code: Option<String>,
    pub reason: String,
}

/// Per-file outcome of an ingest run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: Vec<String>,
    pub uncalibrated: Vec<String>,
    pub unannotated: Vec<String>,
    /// Files that could not be used at all.
    pub problems: Vec<Problem>,
    /// Features dropped or flagged inside otherwise usable documents.
    pub features: Vec<FeatureIssue>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty() && self.features.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Store {
    /// Opens an existing store; fails unless `index.json` is present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let store = Self { root: root.into() };
        let idx = store.index_path();
        if !idx.is_file() {
            return Err(Error::Config(format!("{} is not a dataset store (no index.json)", store.root.display())));
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.toml")
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.dcm"))
    }

    pub fn annotation_path(&self, id: &str) -> PathBuf {
        self.root.join("annotations").join(format!("{id}.json"))
    }

    pub fn split_path(&self) -> PathBuf {
        self.root.join("split.txt")
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn registry(&self) -> Result<ClassRegistry> {
        load_class_registry(self.registry_path())
    }

    pub fn index(&self) -> Result<StoreIndex> {
        let p = self.index_path();
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))
    }

    pub fn ids(&self) -> Result<Vec<String>> {
        Ok(self.index()?.images.into_iter().map(|e| e.id).collect())
    }

    pub fn entry(&self, id: &str) -> Result<IndexEntry> {
        self.index()?
            .images
            .into_iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::Validation(format!("image {id} is not in the store")))
    }

    /// Loads an image, tagging it with its split when a manifest exists.
    pub fn load_image(&self, id: &str) -> Result<ImageRecord> {
        let mut rec = load_dicom(self.image_path(id))?;
        rec.id = id.to_string();
        if let Some(m) = self.read_split()? {
            rec.split = m.get(id).unwrap_or_default();
        }
        Ok(rec)
    }

    /// Canonical annotations of an image, `None` when it has none.
    pub fn load_annotations(&self, id: &str, registry: &ClassRegistry) -> Result<Option<AnnotationSet>> {
        let p = self.annotation_path(id);
        if !p.is_file() {
            return Ok(None);
        }
        let load = load_annotations(&p, registry)?;
        if !load.rejected.is_empty() {
            return Err(Error::Validation(format!("{}: stored annotations contain rejected features", p.display())));
        }
        Ok(Some(load.set))
    }

    pub fn write_annotations(&self, set: &AnnotationSet, registry: &ClassRegistry) -> Result<()> {
        write_file(&self.annotation_path(&set.image_id), set.to_json_string(registry)?)
    }

    pub fn read_split(&self) -> Result<Option<SplitManifest>> {
        let p = self.split_path();
        if !p.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        SplitManifest::parse(&text).map(Some)
    }

    pub fn write_split(&self, manifest: &SplitManifest) -> Result<()> {
        write_file(&self.split_path(), manifest.to_text())
    }
}

enum FileOutcome {
    Image(ImageRecord, PathBuf),
    Failed(Problem),
}

/// Validates a directory of DICOM files and a directory of annotation
/// documents and copies them into a fresh store at `root`.
///
/// Images pair with annotations by file stem. A bad file is recorded in
/// the report and skipped; it never aborts the run.
pub fn ingest_dataset(
    dicom_dir: impl AsRef<Path>,
    annotation_dir: impl AsRef<Path>,
    registry_path: impl AsRef<Path>,
    root: impl AsRef<Path>,
) -> Result<(Store, IngestReport)> {
    let registry_path = registry_path.as_ref();
    let registry = load_class_registry(registry_path)?;
    let root = root.as_ref().to_path_buf();
    if root.join("index.json").exists() {
        return Err(Error::Config(format!("{} already holds a store", root.display())));
    }
    let store = Store { root };
    let dicoms = files_with_ext(dicom_dir.as_ref(), "dcm")?;
    let annotations: BTreeMap<String, PathBuf> =
        files_with_ext(annotation_dir.as_ref(), "json")?.into_iter().map(|p| (stem(&p), p)).collect();

    let outcomes: Vec<FileOutcome> = dicoms
        .par_iter()
        .map(|p| match load_dicom(p) {
            Ok(rec) => FileOutcome::Image(rec, p.clone()),
            Err(e) => FileOutcome::Failed(Problem { path: p.display().to_string(), reason: e.to_string() }),
        })
        .collect();

    let mut report = IngestReport::default();
    let mut index = Vec::new();
    let mut seen = BTreeMap::new();
    for outcome in outcomes {
        let (rec, src) = match outcome {
            FileOutcome::Image(rec, src) => (rec, src),
            FileOutcome::Failed(p) => {
                report.problems.push(p);
                continue;
            }
        };
        if let Some(prev) = seen.insert(rec.id.clone(), src.clone()) {
            report.problems.push(Problem {
                path: src.display().to_string(),
                reason: format!("image id {} already provided by {}", rec.id, prev.display()),
            });
            continue;
        }
        let mut annotated = false;
        if let Some(ap) = annotations.get(&rec.id) {
            match load_annotations(ap, &registry) {
                Ok(load) if load.set.image_id != rec.id => report.problems.push(Problem {
                    path: ap.display().to_string(),
                    reason: format!("document names image {} but the file pairs with {}", load.set.image_id, rec.id),
                }),
                Ok(load) => {
                    for r in load.rejected {
                        report.features.push(FeatureIssue {
                            image_id: rec.id.clone(),
                            container: r.container,
                            index: Some(r.index),
                            code: r.code,
                            reason: r.reason,
                        });
                    }
                    for c in load.set.out_of_bounds(rec.width, rec.height) {
                        report.features.push(FeatureIssue {
                            image_id: rec.id.clone(),
                            container: "any".into(),
                            index: None,
                            code: Some(registry.code(c)?.to_string()),
                            reason: "coordinates outside the image".into(),
                        });
                    }
                    store.write_annotations(&load.set, &registry)?;
                    annotated = true;
                }
                Err(e) => report.problems.push(Problem { path: ap.display().to_string(), reason: e.to_string() }),
            }
        }
        if !annotated {
            report.unannotated.push(rec.id.clone());
        }
        if !rec.is_calibrated() {
            report.uncalibrated.push(rec.id.clone());
        }
        let dst = store.image_path(&rec.id);
        if let Some(dir) = dst.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::copy(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        report.ingested.push(rec.id.clone());
        index.push(IndexEntry {
            id: rec.id.clone(),
            width: rec.width,
            height: rec.height,
            bit_depth: rec.bit_depth,
            spacing: rec.spacing,
            annotated,
        });
    }
    for (id, p) in &annotations {
        if !seen.contains_key(id) {
            report.problems.push(Problem { path: p.display().to_string(), reason: "no image with this id".into() });
        }
    }
    index.sort_by(|a, b| a.id.cmp(&b.id));
    for list in [&mut report.ingested, &mut report.uncalibrated, &mut report.unannotated] {
        list.sort();
    }
    std::fs::create_dir_all(&store.root).map_err(|e| Error::io(&store.root, e))?;
    write_file(&store.registry_path(), registry.to_toml_string())?;
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    write_file(&store.root.join("ingest_report.json"), report_json)?;
    let mut idx = serde_json::to_string_pretty(&StoreIndex { schema_version: STORE_SCHEMA_VERSION, images: index })?;
    idx.push('\n');
    write_file(&store.index_path(), idx)?;
    Ok((store, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{write_synth_dataset, SynthConfig};

    #[test]
    fn ingest_synthetic_and_bad_files() {
        let tmp = tempfile::tempdir().unwrap();
        let src = tmp.path().join("src");
        let reg = ClassRegistry::pilot();
        let ids = write_synth_dataset(&src, &reg, &SynthConfig { n: 3, seed: 2, ..Default::default() }).unwrap();
        std::fs::write(src.join("dicom/broken.dcm"), b"not a dicom").unwrap();
        std::fs::write(src.join("annotations/orphan.json"), r#"{"schema_version":1,"image_id":"orphan"}"#).unwrap();
        let (store, report) =
            ingest_dataset(src.join("dicom"), src.join("annotations"), src.join("registry.toml"), tmp.path().join("store"))
                .unwrap();
        assert_eq!(report.ingested, ids);
        assert_eq!(report.problems.len(), 2);
        assert!(report.problems.iter().any(|p| p.path.ends_with("broken.dcm")));
        assert!(report.problems.iter().any(|p| p.path.ends_with("orphan.json")));

        let store = Store::open(store.root()).unwrap();
        assert_eq!(store.ids().unwrap(), ids);
        let rec = store.load_image(&ids[1]).unwrap();
        assert_eq!((rec.width, rec.height), (512, 512));
        let ann = store.load_annotations(&ids[1], &reg).unwrap().unwrap();
        assert_eq!(ann.landmarks.len(), 8);
        assert!(Store::open(tmp.path()).is_err());
        // ingesting into an existing store is refused
        assert!(ingest_dataset(src.join("dicom"), src.join("annotations"), src.join("registry.toml"), store.root()).is_err());
    }
}
