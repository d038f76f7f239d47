//! Turns a single-class face detector into a mask/nomask detector by
//! duplicating its class-prediction heads.
//!
//! For each anchor slot `a` the face channel becomes two channels: mask
//! (`2a`, face weights plus `epsilon`) and nomask (`2a + 1`, an exact copy).
//! Biases are copied to both without perturbation. Every other tensor is
//! left untouched.

use super::graph::{ModelGraph, OpCode, TensorData, KEY_CLASSES};
use super::{Label, ModelError, ModelKind};

pub const DEFAULT_EPSILON: f32 = 1e-7;

pub fn extend_class_head(face_model: &ModelGraph, epsilon: f32) -> Result<ModelGraph, ModelError> {
    if face_model.kind() != ModelKind::Detector {
        return Err(ModelError::Surgery("model is not a detector".into()));
    }
    if face_model.num_classes() != 1 {
        return Err(ModelError::Surgery(format!(
            "expected a single-class model, found {} classes",
            face_model.num_classes()
        )));
    }
    if face_model.is_quantized() {
        return Err(ModelError::Surgery("surgery operates on float models".into()));
    }
    if !epsilon.is_finite() {
        return Err(ModelError::Surgery(format!("epsilon {epsilon} is not finite")));
    }
    if face_model.class_outputs().is_empty() {
        return Err(ModelError::Surgery("missing class head".into()));
    }

    let heads: Vec<(usize, usize, usize)> = face_model
        .class_outputs()
        .iter()
        .map(|&out| {
            let op = face_model
                .producer(out)
                .map(|i| &face_model.ops()[i])
                .filter(|op| op.code == OpCode::Conv2d)
                .ok_or_else(|| ModelError::Surgery(format!("class output {out} is not produced by a conv")))?;
            Ok((op.inputs[1], op.inputs[2], out))
        })
        .collect::<Result<_, ModelError>>()?;

    let (mut metadata, mut tensors, ops) = face_model.clone().into_parts();
    for (wi, bi, out) in heads {
        let w = &tensors[wi];
        let per = w.shape[1..].iter().product::<usize>();
        let anchors = w.shape[0];
        let face_w = w.f32_data().expect("float weights");
        let mut new_w = Vec::with_capacity(face_w.len() * 2);
        for row in face_w.chunks(per) {
            new_w.extend(row.iter().map(|&x| x + epsilon));
            new_w.extend_from_slice(row);
        }
        let face_b = tensors[bi].f32_data().expect("float bias");
        let new_b: Vec<f32> = face_b.iter().flat_map(|&b| [b, b]).collect();

        tensors[wi].shape[0] = anchors * 2;
        tensors[wi].data = Some(TensorData::F32(new_w));
        tensors[bi].shape = vec![anchors * 2];
        tensors[bi].data = Some(TensorData::F32(new_b));
        let last = tensors[out].shape.len() - 1;
        tensors[out].shape[last] *= 2;
    }
    let names: Vec<&str> = Label::ALL.iter().map(|l| l.name()).collect();
    metadata.insert(KEY_CLASSES.into(), names.join(","));
    ModelGraph::new(metadata, tensors, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fixture, FixtureKind};

    #[test]
    fn layout_per_anchor() {
        let face = build_fixture(FixtureKind::FaceDetector, 3, false);
        let ext = extend_class_head(&face, 0.5).unwrap();
        assert_eq!(ext.num_classes(), 2);
        let wi = ext.find("head0/class/weights").unwrap();
        let fw = face.tensor(wi).f32_data().unwrap();
        let ew = ext.tensor(wi).f32_data().unwrap();
        let per = fw.len() / 3;
        for a in 0..3 {
            let face_row = &fw[a * per..][..per];
            let mask = &ew[2 * a * per..][..per];
            let nomask = &ew[(2 * a + 1) * per..][..per];
            assert_eq!(nomask, face_row);
            for (m, f) in mask.iter().zip(face_row) {
                assert_eq!(*m, f + 0.5);
            }
        }
    }

    #[test]
    fn errors() {
        let two = build_fixture(FixtureKind::MaskDetector, 1, false);
        assert!(matches!(extend_class_head(&two, 0.0), Err(ModelError::Surgery(_))));
        let cls = build_fixture(FixtureKind::Classifier, 1, false);
        assert!(matches!(extend_class_head(&cls, 0.0), Err(ModelError::Surgery(_))));
        let q = build_fixture(FixtureKind::FaceDetector, 1, true);
        assert!(matches!(extend_class_head(&q, 0.0), Err(ModelError::Surgery(_))));
    }
}
