//! Reading radiographs and ground-truth annotations, and preparing pixels
//! for model input.

mod annotations;
mod dicom;
mod normalize;

pub use annotations::{
    load_annotations, AnnotationLoad, AnnotationSet, Geometry, Rejection, ANNOTATION_SCHEMA_VERSION,
};
pub use dicom::{load_dicom, write_dicom};
pub(crate) use dicom::fnv1a as stable_hash;
pub use normalize::{normalize_image, render_8bit, NormalizedImage, DEFAULT_INPUT_SIDE};
