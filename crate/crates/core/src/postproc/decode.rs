use super::{Anchor, BBox, PostprocError};

/// Scale factors applied to the raw `(ty, tx, th, tw)` regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxCoder {
    scales: [f32; 4],
}

impl BoxCoder {
    pub fn new(scales: [f32; 4]) -> Self {
        Self { scales }
    }

    pub fn scales(&self) -> [f32; 4] {
        self.scales
    }
}

impl Default for BoxCoder {
    fn default() -> Self {
        Self::new([10.0, 10.0, 5.0, 5.0])
    }
}

/// Decodes one regression against its anchor. The result is not clipped.
pub fn decode_box(t: [f32; 4], anchor: &Anchor, coder: &BoxCoder) -> BBox {
    let [fy, fx, fh, fw] = coder.scales;
    let cy = t[0] / fy * anchor.h + anchor.cy;
    let cx = t[1] / fx * anchor.w + anchor.cx;
    let h = anchor.h * (t[2] / fh).exp();
    let w = anchor.w * (t[3] / fw).exp();
    BBox::new(cy - h / 2.0, cx - w / 2.0, cy + h / 2.0, cx + w / 2.0)
}

/// Decodes `4 * anchors.len()` regression values and clips to the unit square.
pub fn decode_boxes(raw: &[f32], anchors: &[Anchor], coder: &BoxCoder) -> Result<Vec<BBox>, PostprocError> {
    if raw.len() != anchors.len() * 4 {
        return Err(PostprocError::LengthMismatch {
            anchors: anchors.len(),
            actual: raw.len(),
        });
    }
    Ok(raw
        .chunks_exact(4)
        .zip(anchors)
        .map(|(t, a)| decode_box([t[0], t[1], t[2], t[3]], a, coder).clip_unit())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postproc::{generate_anchors, AnchorConfig, FeatureMapAnchors};
    use proptest::prelude::*;

    fn fixture_anchors() -> Vec<Anchor> {
        generate_anchors(&AnchorConfig {
            feature_maps: vec![
                FeatureMapAnchors { grid_h: 4, grid_w: 4, scale: 0.3, aspect_ratios: vec![1.0, 2.0, 0.5] },
                FeatureMapAnchors { grid_h: 2, grid_w: 2, scale: 0.6, aspect_ratios: vec![1.0, 2.0, 0.5] },
            ],
            coder: BoxCoder::default(),
        })
    }

    #[test]
    fn zero_regression_reproduces_anchors() {
        let coder = BoxCoder::default();
        for a in fixture_anchors() {
            let b = decode_box([0.0; 4], &a, &coder);
            assert_eq!(b, BBox::new(a.cy - a.h / 2.0, a.cx - a.w / 2.0, a.cy + a.h / 2.0, a.cx + a.w / 2.0));
        }
        let a = Anchor { cy: 0.5, cx: 0.5, h: 0.5, w: 0.5 };
        let boxes = decode_boxes(&[0.0; 4], &[a], &coder).unwrap();
        assert_eq!(boxes, vec![BBox::new(0.25, 0.25, 0.75, 0.75)]);
    }

    #[test]
    fn log_two_doubles_height() {
        let coder = BoxCoder::default();
        let a = Anchor { cy: 0.5, cx: 0.5, h: 0.2, w: 0.3 };
        let b = decode_box([0.0, 0.0, 5.0 * std::f32::consts::LN_2, 0.0], &a, &coder);
        assert!(((b.ymax - b.ymin) - 0.4).abs() < 1e-6);
        assert!(((b.xmax - b.xmin) - 0.3).abs() < 1e-6);
        assert!(((b.ymin + b.ymax) / 2.0 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn length_mismatch() {
        let anchors = fixture_anchors();
        assert_eq!(
            decode_boxes(&[0.0; 7], &anchors, &BoxCoder::default()),
            Err(PostprocError::LengthMismatch { anchors: 60, actual: 7 })
        );
    }

    proptest! {
        // Regressions within +-2 keep each decoded centre within half a box
        // of its anchor centre, so every clipped box keeps positive extent.
        #[test]
        fn decoded_boxes_clipped_and_proper(raw in proptest::collection::vec(-2f32..2.0, 240)) {
            let boxes = decode_boxes(&raw, &fixture_anchors(), &BoxCoder::default()).unwrap();
            for b in boxes {
                prop_assert!(0.0 <= b.ymin && b.ymin < b.ymax && b.ymax <= 1.0, "{:?}", b);
                prop_assert!(0.0 <= b.xmin && b.xmin < b.xmax && b.xmax <= 1.0, "{:?}", b);
            }
        }
    }
}
