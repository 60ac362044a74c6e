//! Shared domain types: coordinate frames, geometry, masks and the class
//! registry.

mod frame;
mod image;
mod mask;
mod registry;

pub use frame::{px_to_mm, BBox, Frame, GeometryTransform, PixelSpacing, PointPx};
pub use image::{ImageGeometry, ImageRecord, Split, Window};
pub use mask::{DenseMask, Mask};
pub use registry::{
    load_class_registry, ClassId, ClassRegistry, EvalGroup, FeatureClass, FeatureKind, Region,
    Side, REGISTRY_SCHEMA_VERSION,
};
