use std::path::Path;

use super::{BackendDescriptor, InferenceBackend};
use crate::error::{Error, Result};

/// Tensor layout expected from exported networks.
///
/// - detector: input `[1, 1, S, S]` f32 in `[0, 1]`; output `[1, N, 6]` rows
///   of `x1, y1, x2, y2, confidence, class` in model-frame pixels.
/// - segmenter: inputs `[1, 1, S, S]` image and `[1, 4]` prompt box
///   `x1, y1, x2, y2`; output `[1, 1, S, S]` foreground probabilities.
pub const MODEL_IO_LAYOUT: &str = "detector: [1,1,S,S] -> [1,N,6] (x1,y1,x2,y2,conf,class); \
segmenter: [1,1,S,S] + [1,4] -> [1,1,S,S]";

/// Loads a detector and a segmenter exported to ONNX.
///
/// Fails with a backend error naming the path when a file is missing or its
/// tensor shapes do not fit [`MODEL_IO_LAYOUT`] at the descriptor's input side.
pub fn load_model_backend(
    detector: impl AsRef<Path>,
    segmenter: impl AsRef<Path>,
    descriptor: BackendDescriptor,
) -> Result<Box<dyn InferenceBackend>> {
    for p in [detector.as_ref(), segmenter.as_ref()] {
        if !p.is_file() {
            return Err(Error::Backend(format!("model file not found: {}", p.display())));
        }
    }
    imp::load(detector.as_ref(), segmenter.as_ref(), descriptor)
}

#[cfg(not(feature = "onnx"))]
mod imp {
    use super::*;

    pub(super) fn load(_: &Path, _: &Path, _: BackendDescriptor) -> Result<Box<dyn InferenceBackend>> {
        Err(Error::Backend("model backend unavailable: built without the `onnx` feature".into()))
    }
}

#[cfg(feature = "onnx")]
mod imp {
    use super::*;
    use crate::backend::{check_input, clip_prompt, validate_detection, validate_segment, Detection, ProbabilityMap, SegmentResult};
    use crate::ingest::NormalizedImage;
    use crate::model::{BBox, ClassId, Frame};
    use tract_onnx::prelude::*;
    use tract_onnx::tract_hir::infer::Factoid;

    type Plan = std::sync::Arc<TypedRunnableModel>;

    struct OnnxBackend {
        descriptor: BackendDescriptor,
        detector: Plan,
        segmenter: Plan,
    }

    fn backend_err(path: &Path, e: impl std::fmt::Display) -> Error {
        Error::Backend(format!("{}: {e}", path.display()))
    }

    fn concrete_shape(plan: &Plan, output: usize) -> Option<Vec<usize>> {
        let fact = plan.model().output_fact(output).ok()?;
        fact.shape.as_concrete().map(|s| s.to_vec())
    }

    fn build(path: &Path, inputs: &[Vec<usize>]) -> Result<Plan> {
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(|e| backend_err(path, e))?;
        if model.inputs.len() != inputs.len() {
            return Err(backend_err(
                path,
                format!("expected {} input tensor(s), model has {}", inputs.len(), model.inputs.len()),
            ));
        }
        for (i, shape) in inputs.iter().enumerate() {
            // declared concrete dimensions must agree; symbolic ones are bound here
            let declared = model.input_fact(i).map_err(|e| backend_err(path, e))?.shape.clone();
            let conflict = declared.dims().count() != shape.len() && !declared.is_open()
                || declared.dims().zip(shape).any(|(d, &want)| {
                    d.concretize().and_then(|d| d.to_i64().ok()).is_some_and(|got| got != want as i64)
                });
            if conflict {
                return Err(backend_err(path, format!("input {i} shape mismatch: model declares {declared:?}, need {shape:?}")));
            }
            model = model
                .with_input_fact(i, f32::fact(shape).into())
                .map_err(|e| backend_err(path, format!("input {i} shape mismatch: {e}")))?;
        }
        let typed = model
            .into_optimized()
            .map_err(|e| backend_err(path, format!("shape mismatch: {e}")))?;
        typed.into_runnable().map_err(|e| backend_err(path, e))
    }

    pub(super) fn load(det: &Path, seg: &Path, descriptor: BackendDescriptor) -> Result<Box<dyn InferenceBackend>> {
        let s = descriptor.required_input_side as usize;
        let detector = build(det, &[vec![1, 1, s, s]])?;
        match concrete_shape(&detector, 0) {
            Some(shape) if shape.len() == 3 && shape[0] == 1 && shape[2] == 6 => {}
            Some(shape) => return Err(backend_err(det, format!("detector output {shape:?} is not [1, N, 6]"))),
            None => {}
        }
        let segmenter = build(seg, &[vec![1, 1, s, s], vec![1, 4]])?;
        match concrete_shape(&segmenter, 0) {
            Some(shape) if shape == [1, 1, s, s] => {}
            Some(shape) => return Err(backend_err(seg, format!("segmenter output {shape:?} is not [1, 1, {s}, {s}]"))),
            None => {}
        }
        Ok(Box::new(OnnxBackend { descriptor, detector, segmenter }))
    }

    impl OnnxBackend {
        fn image_tensor(&self, img: &NormalizedImage) -> Result<Tensor> {
            let s = img.width as usize;
            let data: Vec<f32> = img.intensities.iter().map(|&v| v as f32 / 255.0).collect();
            Tensor::from_shape(&[1, 1, s, s], &data).map_err(|e| Error::Backend(e.to_string()))
        }
    }

    impl InferenceBackend for OnnxBackend {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.descriptor
        }

        fn detect(&self, img: &NormalizedImage) -> Result<Vec<Detection>> {
            check_input(&self.descriptor, img)?;
            let out = self
                .detector
                .run(tvec!(self.image_tensor(img)?.into()))
                .map_err(|e| Error::Backend(format!("detector: {e}")))?;
            let view = out[0].to_plain_array_view::<f32>().map_err(|e| Error::Backend(e.to_string()))?;
            let shape = view.shape().to_vec();
            if shape.len() != 3 || shape[2] != 6 {
                return Err(Error::Backend(format!("detector output {shape:?} is not [1, N, 6]")));
            }
            let side = self.descriptor.required_input_side;
            let mut dets = Vec::with_capacity(shape[1]);
            for n in 0..shape[1] {
                let r = |k: usize| view[[0, n, k]] as f64;
                if r(5) < 0.0 || r(5).fract() != 0.0 {
                    return Err(Error::Backend(format!("detector class index {} is not a class id", r(5))));
                }
                let bbox = BBox::new(r(0), r(1), r(2), r(3), Frame::Model)
                    .map_err(|e| Error::Backend(format!("detector box {n}: {e}")))?;
                let d = Detection { class_id: ClassId(r(5) as u32), bbox, confidence: r(4) };
                validate_detection(&d, side)?;
                dets.push(d);
            }
            Ok(dets)
        }

        fn segment(&self, img: &NormalizedImage, prompt: BBox, class_id: ClassId) -> Result<SegmentResult> {
            check_input(&self.descriptor, img)?;
            prompt.require_frame(Frame::Model)?;
            let Some(clipped) = clip_prompt(&prompt, img) else {
                return Ok(SegmentResult {
                    class_id,
                    prob_mask: ProbabilityMap::zeros(img.width, img.height),
                    prompt_box: prompt,
                    clipped_empty: true,
                });
            };
            let b = [clipped.x_min as f32, clipped.y_min as f32, clipped.x_max as f32, clipped.y_max as f32];
            let box_t = Tensor::from_shape(&[1, 4], &b).map_err(|e| Error::Backend(e.to_string()))?;
            let out = self
                .segmenter
                .run(tvec!(self.image_tensor(img)?.into(), box_t.into()))
                .map_err(|e| Error::Backend(format!("segmenter: {e}")))?;
            let view = out[0].to_plain_array_view::<f32>().map_err(|e| Error::Backend(e.to_string()))?;
            let result = SegmentResult {
                class_id,
                prob_mask: ProbabilityMap {
                    width: img.width,
                    height: img.height,
                    values: view.iter().copied().collect(),
                },
                prompt_box: prompt,
                clipped_empty: false,
            };
            validate_segment(&result, self.descriptor.required_input_side)?;
            Ok(result)
        }
    }
}
