//! Append-only revision files.
//!
//! ```text
//! <review>/<image_id>/rev-000001.json
//! <review>/<image_id>/rev-000002.json
//! <review>/<image_id>/HEAD              latest revision number
//! ```
//!
//! A revision is written to a temporary file and renamed into place, so a
//! revision file is either complete or absent. `HEAD` is only a hint:
//! [`ReviewStore::scan`] trusts the highest readable revision and repairs
//! `HEAD` when the two disagree.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::ServiceError;
use crate::records::StoredRevision;

#[derive(Debug)]
pub struct ReviewStore {
    dir: PathBuf,
    crash_after_revision: AtomicBool,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| storage(&tmp, e))?;
    f.write_all(bytes).map_err(|e| storage(&tmp, e))?;
    f.sync_all().map_err(|e| storage(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| storage(path, e))?;
    if let Some(dir) = path.parent() {
        // persist the rename itself where the platform allows it
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

fn rev_number(name: &str) -> Option<u64> {
    name.strip_prefix("rev-")?.strip_suffix(".json")?.parse().ok()
}

impl ReviewStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), crash_after_revision: AtomicBool::new(false) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Makes the next [`append`](Self::append) stop after the revision file
    /// is durable and before `HEAD` moves, as a crash there would.
    pub fn inject_crash_after_revision_write(&self) {
        self.crash_after_revision.store(true, Ordering::SeqCst);
    }

    fn image_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    pub fn revision_path(&self, id: &str, n: u64) -> PathBuf {
        self.image_dir(id).join(format!("rev-{n:06}.json"))
    }

    pub fn head_path(&self, id: &str) -> PathBuf {
        self.image_dir(id).join("HEAD")
    }

    pub fn append(&self, rev: &StoredRevision) -> Result<(), ServiceError> {
        let dir = self.image_dir(&rev.image_id);
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        let path = self.revision_path(&rev.image_id, rev.revision);
        if path.exists() {
            return Err(storage(&path, "revision already exists"));
        }
        let mut bytes = serde_json::to_vec_pretty(rev).map_err(|e| storage(&path, e))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        if self.crash_after_revision.swap(false, Ordering::SeqCst) {
            return Err(storage(&path, "injected crash before HEAD update"));
        }
        write_atomic(&self.head_path(&rev.image_id), format!("{}\n", rev.revision).as_bytes())
    }

    /// Revision numbers present for an image, ascending.
    pub fn revisions(&self, id: &str) -> Result<Vec<u64>, ServiceError> {
        let dir = self.image_dir(id);
        if !dir.is_dir() {
            return Ok(vec![]);
        }
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(|e| storage(&dir, e))? {
            let e = e.map_err(|e| storage(&dir, e))?;
            if let Some(n) = e.file_name().to_str().and_then(rev_number) {
                out.push(n);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn read_revision(&self, id: &str, n: u64) -> Result<StoredRevision, ServiceError> {
        let path = self.revision_path(id, n);
        let text = fs::read_to_string(&path).map_err(|e| storage(&path, e))?;
        let rev: StoredRevision = serde_json::from_str(&text).map_err(|e| storage(&path, e))?;
        if rev.image_id != id || rev.revision != n {
            return Err(storage(&path, "file does not match its name"));
        }
        Ok(rev)
    }

    /// Latest readable revision of every image, repairing `HEAD` files and
    /// clearing leftovers of interrupted writes.
    pub fn scan(&self) -> Result<BTreeMap<String, StoredRevision>, ServiceError> {
        let mut out = BTreeMap::new();
        if !self.dir.is_dir() {
            return Ok(out);
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| storage(&self.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else { continue };
            for e in fs::read_dir(&dir).map_err(|e| storage(&dir, e))?.flatten() {
                if e.path().extension().is_some_and(|x| x == "tmp") {
                    log::warn!("removing interrupted write {}", e.path().display());
                    let _ = fs::remove_file(e.path());
                }
            }
            let mut latest = None;
            for n in self.revisions(&id)?.into_iter().rev() {
                match self.read_revision(&id, n) {
                    Ok(rev) => {
                        latest = Some(rev);
                        break;
                    }
                    Err(e) => log::warn!("skipping unreadable revision: {e}"),
                }
            }
            let Some(rev) = latest else { continue };
            let head = fs::read_to_string(self.head_path(&id)).ok().and_then(|s| s.trim().parse::<u64>().ok());
            if head != Some(rev.revision) {
                log::warn!("{id}: HEAD {head:?} behind revision {}, repaired", rev.revision);
                write_atomic(&self.head_path(&id), format!("{}\n", rev.revision).as_bytes())?;
            }
            out.insert(id, rev);
        }
        Ok(out)
    }
}
