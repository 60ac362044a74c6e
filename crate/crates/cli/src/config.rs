use std::path::Path;

use serde::Deserialize;

use crate::CliError;

/// Optional TOML file with defaults for the pipeline knobs. Command-line
/// flags take precedence over it.
///
/// ```toml
/// seed = 7
///
/// [labels]
/// input_side = 512
/// landmark_radius_mm = 2.0
/// stroke_mm = 2.0
/// fallback_spacing_mm = 0.5
///
/// [pipeline]
/// confidence_threshold = 0.25
/// mask_threshold = 0.5
/// landmark_source = "box"          # or "centroid"
///
/// [stub]
/// drop = ["A01_r", "O08"]
/// center_jitter_px = 2.0
/// scale_jitter = 0.0
/// morphology = 0
/// confidence_penalty = 0.1
///
/// [report]
/// std = "population"               # or "sample"
/// acceptability_mm = 3.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub labels: LabelSection,
    pub pipeline: PipelineSection,
    pub stub: StubSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSection {
    pub input_side: u32,
    pub landmark_radius_mm: f64,
    pub stroke_mm: f64,
    pub fallback_spacing_mm: Option<f64>,
}

impl Default for LabelSection {
    fn default() -> Self {
        Self { input_side: 512, landmark_radius_mm: 2.0, stroke_mm: 2.0, fallback_spacing_mm: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    #[default]
    Box,
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub confidence_threshold: f64,
    pub mask_threshold: f64,
    pub landmark_source: SourceArg,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { confidence_threshold: 0.25, mask_threshold: 0.5, landmark_source: SourceArg::Box }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubSection {
    pub drop: Vec<String>,
    pub center_jitter_px: f64,
    pub scale_jitter: f64,
    pub morphology: i32,
    pub confidence_penalty: f64,
}

impl Default for StubSection {
    fn default() -> Self {
        Self { drop: vec![], center_jitter_px: 0.0, scale_jitter: 0.0, morphology: 0, confidence_penalty: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StdArg {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub std: StdArg,
    pub acceptability_mm: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { std: StdArg::Population, acceptability_mm: 3.0 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(p) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
    }
}
