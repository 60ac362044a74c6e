//! Training-pool export: curated annotations plus labels regenerated from
//! them.
//!
//! ```text
//! <pool>/manifest.json
//! <pool>/registry.toml
//! <pool>/annotations/<id>.json
//! <pool>/labels/boxes/<id>.txt
//! <pool>/labels/polygons/<id>.txt
//! ```
//!
//! The pool is rebuilt from scratch in a sibling directory and swapped in,
//! so its content depends only on the stored revisions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pelvimark::labelgen::{build_label_bundle, export_detection_labels, LabelFormat, LabelOptions};
use pelvimark::model::{ClassRegistry, ImageGeometry, Split};
use pelvimark::store::IndexEntry;

use crate::error::ServiceError;
use crate::records::{ReviewRecord, ReviewStatus};
use crate::wire::ResolutionKind;

pub const POOL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolImage {
    pub image_id: String,
    pub revision: u64,
    pub split: Split,
    pub features: usize,
    pub missing: Vec<String>,
    /// Classes whose geometry produced no label pixels.
    pub empty_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub schema_version: u32,
    pub input_side: u32,
    pub images: Vec<PoolImage>,
    pub skipped: Vec<Skipped>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ServiceError> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| io(d, e))?;
    }
    fs::write(path, bytes).map_err(|e| io(path, e))
}

/// Writes every curated record into `pool`, replacing what was there.
/// `records` must be sorted by image id.
pub fn export_pool(
    records: &[(IndexEntry, Split, ReviewRecord)],
    registry: &ClassRegistry,
    opts: &LabelOptions,
    pool: &Path,
) -> Result<PoolManifest, ServiceError> {
    let staging = PathBuf::from(format!("{}.staging", pool.display()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io(&staging, e))?;
    let mut manifest = PoolManifest { schema_version: POOL_SCHEMA_VERSION, input_side: opts.input_side, images: vec![], skipped: vec![] };
    for (entry, split, rec) in records.iter().filter(|(_, _, r)| r.status == ReviewStatus::Curated) {
        let id = &rec.image_id;
        let set = rec.to_annotations(registry)?;
        let geometry = ImageGeometry { width: entry.width, height: entry.height, spacing: entry.spacing };
        let mut bundle = match build_label_bundle(&set, geometry, registry, opts) {
            Ok(b) => b,
            Err(e) => {
                manifest.skipped.push(Skipped { image_id: id.clone(), reason: e.to_string() });
                continue;
            }
        };
        bundle.split = *split;
        write(&staging.join("annotations").join(format!("{id}.json")), set.to_json_string(registry)?)?;
        for (fmt, sub) in [(LabelFormat::Boxes, "boxes"), (LabelFormat::Polygons, "polygons")] {
            let file = export_detection_labels(&bundle, fmt);
            write(&staging.join("labels").join(sub).join(format!("{id}.txt")), file.text)?;
        }
        manifest.images.push(PoolImage {
            image_id: id.clone(),
            revision: rec.revision,
            split: *split,
            features: set.len(),
            missing: rec
                .resolutions
                .values()
                .filter(|r| r.kind == ResolutionKind::MarkedMissing)
                .map(|r| r.code.clone())
                .collect(),
            empty_labels: bundle
                .skipped
                .iter()
                .map(|(c, _)| registry.code(*c).map(str::to_string))
                .collect::<Result<_, _>>()?,
        });
    }
    write(&staging.join("registry.toml"), registry.to_toml_string())?;
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| io(&staging, e))?;
    text.push('\n');
    write(&staging.join("manifest.json"), text)?;
    if pool.exists() {
        fs::remove_dir_all(pool).map_err(|e| io(pool, e))?;
    }
    fs::rename(&staging, pool).map_err(|e| io(pool, e))?;
    Ok(manifest)
}
