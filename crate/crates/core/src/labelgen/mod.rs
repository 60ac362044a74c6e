//! Training-label generation: per-class masks and boxes, detector label
//! files, and the dataset split.

mod bundle;
mod export;
mod raster;
mod split;

pub use bundle::{build_label_bundle, ground_truth_bundle, rasterize_annotations, LabelBundle, LabelOptions};
pub use export::{
    export_detection_labels, parse_box_labels, parse_polygon_labels, LabelFile, LabelFormat,
};
pub use raster::{
    mask_contours, mask_to_bbox, rasterize_landmark, rasterize_outline, rasterize_patch,
    scanline_fill, signed_area, validate_polygon, Canvas,
};
pub use split::{split_dataset, SplitCounts, SplitManifest};
