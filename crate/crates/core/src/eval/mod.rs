//! Accuracy statistics: point errors in millimetres, mask and box IoU,
//! identification rates and the acceptability gate, plus report emitters.

mod emit;
mod metrics;
mod report;

pub use emit::{emit_report, ReportFormat};
pub use metrics::{
    acceptability, aggregate, detection_rate, mask_iou, point_error_mm, Aggregate, MaskIou, PointError, StdKind,
    DEFAULT_ACCEPTABILITY_MM,
};
pub use report::{evaluate, ClassEval, EvalOptions, EvalReport, GroundTruth, GroupSummary, Overall, REPORT_SCHEMA_VERSION};
