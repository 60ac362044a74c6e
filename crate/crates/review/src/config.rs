use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::ServiceError;

/// Service settings: a TOML file, then `PELVIMARK_*` environment
/// overrides.
///
/// ```toml
/// port = 8080
/// bind = "127.0.0.1"
/// data_root = "/data/store"
/// registry = "/data/store/registry.toml"   # default: <data_root>/registry.toml
/// token = "s3cret"                          # optional x-api-token check
/// page_size = 50
/// input_side = 512
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub port: u16,
    pub bind: String,
    pub data_root: PathBuf,
    pub registry: Option<PathBuf>,
    pub predictions_dir: Option<PathBuf>,
    pub review_dir: Option<PathBuf>,
    pub pool_dir: Option<PathBuf>,
    pub token: Option<String>,
    pub page_size: usize,
    /// Model-input side used when regenerating labels at export.
    pub input_side: u32,
    pub landmark_radius_mm: f64,
    pub stroke_mm: f64,
    /// Spacing assumed at export for images that carry none.
    pub fallback_spacing_mm: Option<f64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            bind: "127.0.0.1".into(),
            data_root: PathBuf::from("."),
            registry: None,
            predictions_dir: None,
            review_dir: None,
            pool_dir: None,
            token: None,
            page_size: 50,
            input_side: 512,
            landmark_radius_mm: 2.0,
            stroke_mm: 2.0,
            fallback_spacing_mm: None,
        }
    }
}

pub const ENV_PORT: &str = "PELVIMARK_PORT";
pub const ENV_DATA_ROOT: &str = "PELVIMARK_DATA_ROOT";
pub const ENV_REGISTRY: &str = "PELVIMARK_REGISTRY";
pub const ENV_TOKEN: &str = "PELVIMARK_TOKEN";

impl ServiceConfig {
    /// Reads `path` when given and applies overrides looked up via `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?
            }
            None => ServiceConfig::default(),
        };
        if let Some(v) = env(ENV_PORT) {
            cfg.port = v.parse().map_err(|_| ServiceError::Config(format!("{ENV_PORT}: '{v}' is not a port")))?;
        }
        if let Some(v) = env(ENV_DATA_ROOT) {
            cfg.data_root = v.into();
        }
        if let Some(v) = env(ENV_REGISTRY) {
            cfg.registry = Some(v.into());
        }
        if let Some(v) = env(ENV_TOKEN) {
            cfg.token = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ServiceError> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.page_size == 0 {
            return Err(ServiceError::Config("page_size must be positive".into()));
        }
        if self.input_side == 0 {
            return Err(ServiceError::Config("input_side must be positive".into()));
        }
        if let Some(s) = self.fallback_spacing_mm {
            if !(s.is_finite() && s > 0.0) {
                return Err(ServiceError::Config(format!("fallback_spacing_mm must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn registry_path(&self) -> PathBuf {
        self.registry.clone().unwrap_or_else(|| self.data_root.join("registry.toml"))
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.predictions_dir.clone().unwrap_or_else(|| self.data_root.join("predictions"))
    }

    pub fn review_path(&self) -> PathBuf {
        self.review_dir.clone().unwrap_or_else(|| self.data_root.join("review"))
    }

    pub fn pool_path(&self) -> PathBuf {
        self.pool_dir.clone().unwrap_or_else(|| self.data_root.join("pool"))
    }
}
