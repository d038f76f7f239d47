//! Float reference operators.

use super::{flat_features, pack_blocks, pad_block, Activation, ConvGeometry, ConvSpec, OpError, Padding, BLOCK};
use crate::audit;
use crate::qtensor::FTensor;

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; BLOCK];
    let (ac, at) = a.as_chunks::<BLOCK>();
    let (bc, bt) = b[..a.len()].as_chunks::<BLOCK>();
    let tail: f32 = at.iter().zip(bt).map(|(&x, &y)| x * y).sum();
    for (x, y) in ac.iter().zip(bc) {
        for i in 0..BLOCK {
            lanes[i] += x[i] * y[i];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

pub fn conv2d(input: &FTensor, weights: &FTensor, bias: &[f32], spec: &ConvSpec) -> Result<FTensor, OpError> {
    ConvKernel::new(weights, bias, *spec)?.run(input)
}

/// Convolution with its weights prepared once. Regular convolutions store
/// the weights in blocks of output channels, like the integer kernel.
#[derive(Debug, Clone)]
pub struct ConvKernel {
    weight_shape: Vec<usize>,
    weights: Vec<f32>,
    bias: Vec<f32>,
    spec: ConvSpec,
}

impl ConvKernel {
    pub fn new(weights: &FTensor, bias: &[f32], spec: ConvSpec) -> Result<Self, OpError> {
        let out_c = match weights.shape() {
            &[o, _, _, i] => {
                if spec.depthwise {
                    i
                } else {
                    o
                }
            }
            s => return Err(OpError::ShapeMismatch(format!("conv weights must be 4-D, got {s:?}"))),
        };
        if bias.len() != out_c {
            return Err(OpError::ShapeMismatch(format!(
                "bias has {} entries for {out_c} output channels",
                bias.len()
            )));
        }
        let (weights_data, bias) = if spec.depthwise {
            (weights.data().to_vec(), bias.to_vec())
        } else {
            (pack_blocks(weights.data(), out_c, 1), pad_block(bias))
        };
        Ok(Self {
            weight_shape: weights.shape().to_vec(),
            weights: weights_data,
            bias,
            spec,
        })
    }

    pub fn run(&self, input: &FTensor) -> Result<FTensor, OpError> {
        audit::note_float();
        let spec = &self.spec;
        let g = ConvGeometry::new(input.shape(), &self.weight_shape, spec)?;
        let (kh, kw) = spec.kernel;
        let (sh, sw) = spec.stride;
        let w = &self.weights;
        let mut out = vec![0f32; g.batch * g.out_h * g.out_w * g.out_c];
        let mut padded = vec![0f32; g.padded_h * g.padded_w * g.in_c];
        let k = kh * kw * g.in_c;
        let mut patch = vec![0f32; k];
        let mut acc = vec![0f32; self.bias.len()];

        for n in 0..g.batch {
            g.pad_into(input.data(), n, &mut padded, |v| v);
            let out_image = &mut out[n * g.out_h * g.out_w * g.out_c..][..g.out_h * g.out_w * g.out_c];
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let dst = &mut out_image[(oy * g.out_w + ox) * g.out_c..][..g.out_c];
                    if !spec.depthwise {
                        let patch = if kh * kw == 1 {
                            &padded[(oy * sh * g.padded_w + ox * sw) * g.in_c..][..k]
                        } else {
                            g.gather_patch(&padded, spec, oy, ox, &mut patch);
                            &patch[..]
                        };
                        let blocks = w.chunks_exact(k * BLOCK).zip(self.bias.as_chunks::<BLOCK>().0);
                        for ((wb, b), a) in blocks.zip(acc.as_chunks_mut::<BLOCK>().0) {
                            let mut block = *b;
                            for (&x, wk) in patch.iter().zip(wb.as_chunks::<BLOCK>().0) {
                                for j in 0..BLOCK {
                                    block[j] += x * wk[j];
                                }
                            }
                            *a = block;
                        }
                        for (d, &a) in dst.iter_mut().zip(&acc) {
                            *d = spec.activation.apply(a);
                        }
                        continue;
                    }
                    dst.copy_from_slice(&self.bias);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let px = &padded[((oy * sh + ky) * g.padded_w + ox * sw + kx) * g.in_c..][..g.in_c];
                            let wk = &w[(ky * kw + kx) * g.out_c..][..g.out_c];
                            let m = g.depth_multiplier;
                            if m == 1 {
                                for ((d, &x), &wv) in dst.iter_mut().zip(px).zip(wk) {
                                    *d += x * wv;
                                }
                                continue;
                            }
                            for (c, &x) in px.iter().enumerate() {
                                for (d, &wv) in dst[c * m..][..m].iter_mut().zip(&wk[c * m..][..m]) {
                                    *d += x * wv;
                                }
                            }
                        }
                    }
                    for d in dst.iter_mut() {
                        *d = spec.activation.apply(*d);
                    }
                }
            }
        }
        Ok(FTensor::from_parts_unchecked(g.output_shape(), out))
    }
}

pub fn add(a: &FTensor, b: &FTensor, activation: Activation) -> Result<FTensor, OpError> {
    audit::note_float();
    if a.shape() != b.shape() {
        return Err(OpError::ShapeMismatch(format!("add {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| activation.apply(x + y))
        .collect();
    Ok(FTensor::from_parts_unchecked(a.shape().to_vec(), data))
}

/// Global average pool: NHWC in, N x 1 x 1 x C out.
pub fn avg_pool2d(input: &FTensor) -> Result<FTensor, OpError> {
    audit::note_float();
    let &[batch, h, w, c] = input.shape() else {
        return Err(OpError::ShapeMismatch(format!("avg pool input must be 4-D, got {:?}", input.shape())));
    };
    let count = (h * w) as f32;
    let mut out = vec![0f32; batch * c];
    for n in 0..batch {
        let sums = &mut out[n * c..][..c];
        for px in input.data()[n * h * w * c..][..h * w * c].chunks(c) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        for s in sums.iter_mut() {
            *s /= count;
        }
    }
    Ok(FTensor::from_parts_unchecked(vec![batch, 1, 1, c], out))
}

/// Fully connected layer; the input is flattened to (batch, features).
pub fn dense(input: &FTensor, weights: &FTensor, bias: &[f32], activation: Activation) -> Result<FTensor, OpError> {
    audit::note_float();
    let (batch, features) = flat_features(input.shape())?;
    let &[units, w_in] = weights.shape() else {
        return Err(OpError::ShapeMismatch(format!("dense weights must be 2-D, got {:?}", weights.shape())));
    };
    if w_in != features || bias.len() != units {
        return Err(OpError::ShapeMismatch(format!(
            "dense weights {:?} / bias {} vs {features} input features",
            weights.shape(),
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(batch * units);
    for row in input.data().chunks(features) {
        for (u, wrow) in weights.data().chunks(features).enumerate() {
            out.push(activation.apply(bias[u] + dot(row, wrow)));
        }
    }
    Ok(FTensor::from_parts_unchecked(vec![batch, units], out))
}

pub fn relu6(input: &FTensor) -> FTensor {
    audit::note_float();
    let data = input.data().iter().map(|&x| x.clamp(0.0, 6.0)).collect();
    FTensor::from_parts_unchecked(input.shape().to_vec(), data)
}

/// Weights of one inverted residual block (expand, depthwise, project).
#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub expand: FTensor,
    pub expand_bias: Vec<f32>,
    pub depthwise: FTensor,
    pub depthwise_bias: Vec<f32>,
    pub project: FTensor,
    pub project_bias: Vec<f32>,
}

/// Expansion (1x1 + ReLU6), depthwise 3x3 (+ ReLU6), linear 1x1 projection,
/// and a residual add when the stride is 1 and channel counts agree.
pub fn inverted_residual(input: &FTensor, w: &BlockWeights, stride: usize) -> Result<FTensor, OpError> {
    if stride != 1 && stride != 2 {
        return Err(OpError::InvalidSpec(format!("inverted residual stride must be 1 or 2, got {stride}")));
    }
    let expand = ConvSpec::new(1, 1, Padding::Same).with_activation(Activation::Relu6);
    let dw = ConvSpec::new(3, stride, Padding::Same)
        .depthwise()
        .with_activation(Activation::Relu6);
    let project = ConvSpec::new(1, 1, Padding::Same);
    let h = conv2d(input, &w.expand, &w.expand_bias, &expand)?;
    let h = conv2d(&h, &w.depthwise, &w.depthwise_bias, &dw)?;
    let h = conv2d(&h, &w.project, &w.project_bias, &project)?;
    if stride == 1 && h.shape() == input.shape() {
        add(input, &h, Activation::None)
    } else {
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn t(shape: &[usize], data: Vec<f32>) -> FTensor {
        FTensor::new(shape.to_vec(), data).unwrap()
    }

    fn random(shape: &[usize], rng: &mut XorShift64Star) -> FTensor {
        let n = shape.iter().product();
        t(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    /// Direct definition of cross-correlation with explicit padding lookups.
    fn naive_conv(input: &FTensor, w: &FTensor, bias: &[f32], spec: &ConvSpec) -> FTensor {
        let [n, h, wd, c] = input.shape().try_into().unwrap();
        let [w0, kh, kw, w3] = w.shape().try_into().unwrap();
        let g = ConvGeometry::new(input.shape(), w.shape(), spec).unwrap();
        let mut out = vec![0f32; n * g.out_h * g.out_w * g.out_c];
        for b in 0..n {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for co in 0..g.out_c {
                        let mut acc = bias[co];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * spec.stride.0 + ky) as isize - g.pad_top as isize;
                                let ix = (ox * spec.stride.1 + kx) as isize - g.pad_left as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let base = ((b * h + iy as usize) * wd + ix as usize) * c;
                                if spec.depthwise {
                                    let ci = co / g.depth_multiplier;
                                    acc += input.data()[base + ci] * w.data()[(ky * kw + kx) * w3 + co];
                                } else {
                                    for ci in 0..c {
                                        acc += input.data()[base + ci] * w.data()[((co * kh + ky) * kw + kx) * c + ci];
                                    }
                                }
                            }
                        }
                        let _ = w0;
                        out[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = spec.activation.apply(acc);
                    }
                }
            }
        }
        t(&g.output_shape(), out)
    }

    #[test]
    fn scalar_product() {
        let x = t(&[1, 1, 1, 1], vec![5.0]);
        let w = t(&[1, 1, 1, 1], vec![3.0]);
        let y = conv2d(&x, &w, &[0.0], &ConvSpec::new(1, 1, Padding::Same)).unwrap();
        assert_eq!(y.data(), &[15.0]);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = XorShift64Star::new(2);
        let x = random(&[1, 3, 3, 1], &mut rng);
        let w = t(&[1, 1, 1, 1], vec![1.0]);
        let y = conv2d(&x, &w, &[0.0], &ConvSpec::new(1, 1, Padding::Same)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_naive_definition() {
        let mut rng = XorShift64Star::new(5);
        for (spec, wshape) in [
            (ConvSpec::new(3, 1, Padding::Same), [4, 3, 3, 3]),
            (ConvSpec::new(3, 2, Padding::Same), [4, 3, 3, 3]),
            (ConvSpec::new(3, 2, Padding::Valid), [2, 3, 3, 3]),
            (ConvSpec::new(3, 1, Padding::Same).depthwise(), [1, 3, 3, 3]),
            (ConvSpec::new(3, 2, Padding::Same).depthwise(), [1, 3, 3, 6]),
        ] {
            let x = random(&[2, 7, 6, 3], &mut rng);
            let w = random(&wshape, &mut rng);
            let out_c = if spec.depthwise { wshape[3] } else { wshape[0] };
            let bias: Vec<f32> = (0..out_c).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let got = conv2d(&x, &w, &bias, &spec).unwrap();
            let want = naive_conv(&x, &w, &bias, &spec);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5, "{spec:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn same_padding_preserves_spatial_dims() {
        let x = FTensor::zeros(vec![1, 5, 9, 2]);
        let w = FTensor::zeros(vec![3, 3, 3, 2]);
        let y = conv2d(&x, &w, &[0.0; 3], &ConvSpec::new(3, 1, Padding::Same)).unwrap();
        assert_eq!(y.shape(), &[1, 5, 9, 3]);
    }

    #[test]
    fn conv_shape_errors() {
        let x = FTensor::zeros(vec![1, 4, 4, 2]);
        let w = FTensor::zeros(vec![3, 3, 3, 5]);
        assert!(matches!(
            conv2d(&x, &w, &[0.0; 3], &ConvSpec::new(3, 1, Padding::Same)),
            Err(OpError::ShapeMismatch(_))
        ));
        let w = FTensor::zeros(vec![3, 3, 3, 2]);
        assert!(conv2d(&x, &w, &[0.0; 2], &ConvSpec::new(3, 1, Padding::Same)).is_err());
        assert!(conv2d(&x, &w, &[0.0; 3], &ConvSpec::new(1, 1, Padding::Same)).is_err());
    }

    #[test]
    fn avg_pool_examples() {
        let x = t(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(avg_pool2d(&x).unwrap().data(), &[2.5]);
        let x = t(&[1, 3, 3, 2], [0.75, -2.0].repeat(9));
        assert_eq!(avg_pool2d(&x).unwrap().data(), &[0.75, -2.0]);
    }

    #[test]
    fn dense_examples() {
        let x = t(&[1, 3], vec![1.0, -2.0, 3.0]);
        let eye = t(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dense(&x, &eye, &[0.0; 3], Activation::None).unwrap().data(), x.data());

        let zeros = FTensor::zeros(vec![2, 3]);
        let y = dense(&x, &zeros, &[-1.5, 2.5], Activation::Relu).unwrap();
        assert_eq!(y.data(), &[0.0, 2.5]);
    }

    #[test]
    fn dense_matches_hand_matmul() {
        let mut rng = XorShift64Star::new(9);
        let x = random(&[1, 16], &mut rng);
        let w = random(&[4, 16], &mut rng);
        let b: Vec<f32> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = dense(&x, &w, &b, Activation::None).unwrap();
        for (u, &bias) in b.iter().enumerate() {
            let mut acc = f64::from(bias);
            for i in 0..16 {
                acc += f64::from(x.data()[i]) * f64::from(w.data()[u * 16 + i]);
            }
            assert!((f64::from(y.data()[u]) - acc).abs() < 1e-5);
        }
    }

    #[test]
    fn relu6_examples() {
        let x = t(&[3], vec![-1.0, 3.0, 10.0]);
        assert_eq!(relu6(&x).data(), &[0.0, 3.0, 6.0]);
    }

    fn block(cin: usize, hidden: usize, cout: usize, rng: &mut XorShift64Star, zero: bool) -> BlockWeights {
        let mut r = |shape: &[usize]| {
            if zero {
                FTensor::zeros(shape.to_vec())
            } else {
                random(shape, rng)
            }
        };
        BlockWeights {
            expand: r(&[hidden, 1, 1, cin]),
            expand_bias: vec![0.0; hidden],
            depthwise: r(&[1, 3, 3, hidden]),
            depthwise_bias: vec![0.0; hidden],
            project: r(&[cout, 1, 1, hidden]),
            project_bias: vec![0.0; cout],
        }
    }

    #[test]
    fn residual_block_with_zero_weights_is_identity() {
        let mut rng = XorShift64Star::new(4);
        let x = random(&[1, 4, 4, 3], &mut rng);
        let w = block(3, 6, 3, &mut rng, true);
        assert_eq!(inverted_residual(&x, &w, 1).unwrap(), x);
    }

    #[test]
    fn stride_two_block_halves_spatial() {
        let mut rng = XorShift64Star::new(4);
        let x = random(&[1, 8, 8, 3], &mut rng);
        let w = block(3, 6, 5, &mut rng, false);
        assert_eq!(inverted_residual(&x, &w, 2).unwrap().shape(), &[1, 4, 4, 5]);
        assert!(inverted_residual(&x, &w, 3).is_err());
    }
}
