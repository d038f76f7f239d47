use super::{Image, PipelineError};
use crate::qtensor::{quantize, FTensor, QTensor, QuantParams};

/// Bilinear resize with half-pixel centers, no aspect preservation.
/// Returns `h * w * 3` pixel intensities (not normalized).
pub fn resize_bilinear(img: &Image, size: (usize, usize)) -> Result<Vec<f32>, PipelineError> {
    let (th, tw) = size;
    if img.is_empty() {
        return Err(PipelineError::EmptyImage);
    }
    if th == 0 || tw == 0 {
        return Err(PipelineError::Config(format!("target size {th}x{tw} must be positive")));
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let sy = h as f32 / th as f32;
    let sx = w as f32 / tw as f32;
    let axis = |dst: usize, scale: f32, n: usize| -> (usize, usize, f32) {
        let p = ((dst as f32 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f32);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f32)
    };
    let cols: Vec<_> = (0..tw).map(|x| axis(x, sx, w)).collect();
    let mut out = Vec::with_capacity(th * tw * 3);
    for y in 0..th {
        let (y0, y1, fy) = axis(y, sy, h);
        for &(x0, x1, fx) in &cols {
            for c in 0..3 {
                let p = |yy: usize, xx: usize| f32::from(src[(yy * w + xx) * 3 + c]);
                let top = p(y0, x0) + (p(y0, x1) - p(y0, x0)) * fx;
                let bottom = p(y1, x0) + (p(y1, x1) - p(y1, x0)) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    Ok(out)
}

/// Float-path input: resized pixels mapped to `[-1, 1]` by `x / 127.5 - 1`.
pub fn preprocess_float(img: &Image, size: (usize, usize)) -> Result<FTensor, PipelineError> {
    crate::audit::note_float();
    let data = resize_bilinear(img, size)?
        .into_iter()
        .map(|p| p / 127.5 - 1.0)
        .collect();
    Ok(FTensor::from_parts_unchecked(vec![1, size.0, size.1, 3], data))
}

/// Quantized-path input: the normalized values quantized with the model's
/// input qparams.
pub fn preprocess_quant(img: &Image, size: (usize, usize), qp: QuantParams) -> Result<QTensor, PipelineError> {
    let data = resize_bilinear(img, size)?
        .into_iter()
        .map(|p| quantize(f64::from(p) / 127.5 - 1.0, qp))
        .collect();
    Ok(QTensor::new(vec![1, size.0, size.1, 3], data, qp).expect("shape matches"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let data: Vec<u8> = (0..5 * 7 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let img = Image::new(5, 7, data.clone()).unwrap();
        let out = resize_bilinear(&img, (5, 7)).unwrap();
        assert_eq!(out, data.iter().map(|&v| f32::from(v)).collect::<Vec<_>>());
    }

    #[test]
    fn two_by_two_to_one_averages() {
        let img = Image::new(2, 2, vec![0, 0, 0, 0, 0, 0, 255, 255, 255, 255, 255, 255]).unwrap();
        assert_eq!(resize_bilinear(&img, (1, 1)).unwrap(), vec![127.5; 3]);
    }

    #[test]
    fn gray_normalizes_near_zero() {
        let img = Image::new(4, 4, vec![128; 48]).unwrap();
        let t = preprocess_float(&img, (2, 2)).unwrap();
        let want = 128.0f32 / 127.5 - 1.0;
        assert!(t.data().iter().all(|&v| v == want));
        assert!((want - 0.0039).abs() < 1e-4);
    }

    #[test]
    fn extremes_map_to_unit_range() {
        let img = Image::new(1, 2, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let t = preprocess_float(&img, (1, 2)).unwrap();
        assert_eq!(t.data(), &[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn quantized_matches_float_within_half_quantum() {
        let data: Vec<u8> = (0..=255).flat_map(|v| [v, v, v]).collect();
        let img = Image::new(16, 16, data).unwrap();
        let qp = QuantParams::from_min_max(-1.0, 1.0).unwrap();
        let q = preprocess_quant(&img, (16, 16), qp).unwrap();
        let f = preprocess_float(&img, (16, 16)).unwrap();
        for (a, b) in q.dequantize().data().iter().zip(f.data()) {
            assert!(f64::from((a - b).abs()) <= qp.scale() / 2.0 + 1e-6);
        }
    }

    #[test]
    fn empty_image_rejected() {
        let img = Image::new(0, 0, Vec::new()).unwrap();
        assert_eq!(resize_bilinear(&img, (2, 2)), Err(PipelineError::EmptyImage));
    }
}
