//! Float layer kernels. Every output element is reduced in a fixed order so
//! results are bit-reproducible within a build.

use crate::darknet::{Activation, FoldedConv, Shape};
use crate::scalar::Scalar;

use super::{NnError, Tensor};

/// Slope of the negative branch of the leaky activation.
pub const LEAKY_SLOPE: f64 = 0.1;

#[inline]
pub fn activate<T: Scalar>(x: T, kind: Activation) -> T {
    match kind {
        Activation::Linear => x,
        Activation::Leaky => {
            if x > T::zero() {
                x
            } else {
                x * T::lit(LEAKY_SLOPE)
            }
        }
        Activation::Relu => x.max(T::zero()),
    }
}

/// Convolution kernel with batch normalization already folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel<T> {
    pub filters: usize,
    pub channels: usize,
    pub size: usize,
    /// `filters x channels x size x size`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn from_folded(f: &FoldedConv) -> Self {
        let conv = |v: &f32| T::lit(f64::from(*v));
        Self {
            filters: f.filters,
            channels: f.channels,
            size: f.size,
            weights: f.kernel.iter().map(conv).collect(),
            bias: f.bias.iter().map(conv).collect(),
        }
    }
}

pub(crate) fn conv_out_dim(input: usize, size: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(size).map(|v| v / stride + 1)
}

/// Unfolds input patches into a `(channels*size*size) x (oh*ow)` matrix,
/// writing `fill` for padded taps.
pub(crate) fn im2col<V: Copy>(
    data: &[V],
    shape: Shape,
    size: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    fill: V,
    mut map: impl FnMut(V) -> V,
) -> Vec<V> {
    let n = oh * ow;
    let mut col = vec![fill; shape.channels * size * size * n];
    let (h, w) = (shape.height as isize, shape.width as isize);
    for c in 0..shape.channels {
        let plane = &data[c * shape.height * shape.width..(c + 1) * shape.height * shape.width];
        for ky in 0..size {
            for kx in 0..size {
                let row = ((c * size + ky) * size + kx) * n;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let src = &plane[iy as usize * shape.width..(iy as usize + 1) * shape.width];
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w {
                            *d = map(src[ix as usize]);
                        }
                    }
                }
            }
        }
    }
    col
}

const COL_BLOCK: usize = 256;

/// `out[m][n] = bias[m] + sum_r a[m][r] * b[r][n]`, summed in increasing `r`.
fn gemm_bias<T: Scalar>(a: &[T], b: &[T], bias: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    let mut n0 = 0;
    while n0 < n {
        let n1 = (n0 + COL_BLOCK).min(n);
        for o in 0..m {
            let arow = &a[o * k..(o + 1) * k];
            let orow = &mut out[o * n + n0..o * n + n1];
            for (r, &av) in arow.iter().enumerate() {
                let brow = &b[r * n + n0..r * n + n1];
                for (dst, &bv) in orow.iter_mut().zip(brow) {
                    *dst += av * bv;
                }
            }
        }
        n0 = n1;
    }
    out
}

/// Zero-padded cross-correlation followed by the activation.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &ConvKernel<T>,
    stride: usize,
    pad: usize,
    activation: Activation,
) -> Result<Tensor<T>, NnError> {
    let s = input.shape();
    if s.channels != kernel.channels {
        return Err(NnError::shape(
            None,
            format!("conv expects {} input channels, got {}", kernel.channels, s.channels),
        ));
    }
    if stride == 0 {
        return Err(NnError::shape(None, "conv stride must be positive".into()));
    }
    let (oh, ow) = conv_out_dim(s.height, kernel.size, stride, pad)
        .zip(conv_out_dim(s.width, kernel.size, stride, pad))
        .ok_or_else(|| NnError::shape(None, format!("kernel {} larger than input {s}", kernel.size)))?;
    let k = kernel.channels * kernel.size * kernel.size;
    let n = oh * ow;
    let mut out = if kernel.size == 1 && stride == 1 && pad == 0 {
        gemm_bias(&kernel.weights, input.data(), &kernel.bias, kernel.filters, k, n)
    } else {
        let col = im2col(input.data(), s, kernel.size, stride, pad, oh, ow, T::zero(), |v| v);
        gemm_bias(&kernel.weights, &col, &kernel.bias, kernel.filters, k, n)
    };
    if activation != Activation::Linear {
        out.iter_mut().for_each(|v| *v = activate(*v, activation));
    }
    Tensor::new(Shape::new(kernel.filters, oh, ow), out)
}

/// Output side length of a pool with darknet's padding convention.
pub fn pool_out_dim(input: usize, size: usize, stride: usize, padding: usize) -> usize {
    (input + padding).saturating_sub(size) / stride + 1
}

/// Max pooling with the default padding `size - 1`: windows start at
/// `i * stride` and taps outside the input are ignored, which is the same as
/// replicating the edge.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, size: usize, stride: usize) -> Tensor<T> {
    maxpool2d_padded(input, size, stride, size.saturating_sub(1))
}

pub fn maxpool2d_padded<T: Scalar>(input: &Tensor<T>, size: usize, stride: usize, padding: usize) -> Tensor<T> {
    generic_maxpool(input.shape(), input.data(), size, stride, padding, T::neg_infinity(), |a, b| a.max(b))
        .map(|(shape, data)| Tensor { shape, data })
        .expect("pool shape")
}

pub(crate) fn generic_maxpool<V: Copy>(
    s: Shape,
    data: &[V],
    size: usize,
    stride: usize,
    padding: usize,
    lowest: V,
    max: impl Fn(V, V) -> V,
) -> Option<(Shape, Vec<V>)> {
    let oh = pool_out_dim(s.height, size, stride, padding);
    let ow = pool_out_dim(s.width, size, stride, padding);
    let off = (padding / 2) as isize;
    let mut out = Vec::with_capacity(s.channels * oh * ow);
    for c in 0..s.channels {
        let plane = &data[c * s.height * s.width..(c + 1) * s.height * s.width];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = lowest;
                for ky in 0..size {
                    let y = (oy * stride + ky) as isize - off;
                    if y < 0 || y >= s.height as isize {
                        continue;
                    }
                    for kx in 0..size {
                        let x = (ox * stride + kx) as isize - off;
                        if x >= 0 && x < s.width as isize {
                            best = max(best, plane[y as usize * s.width + x as usize]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Some((Shape::new(s.channels, oh, ow), out))
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample<T: Copy>(s: Shape, data: &[T], stride: usize) -> (Shape, Vec<T>) {
    let out_shape = Shape::new(s.channels, s.height * stride, s.width * stride);
    let mut out = Vec::with_capacity(out_shape.len());
    for c in 0..s.channels {
        for y in 0..out_shape.height {
            let src = &data[(c * s.height + y / stride) * s.width..(c * s.height + y / stride + 1) * s.width];
            for x in 0..out_shape.width {
                out.push(src[x / stride]);
            }
        }
    }
    (out_shape, out)
}

pub fn upsample2x<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let (shape, data) = upsample(input.shape(), input.data(), 2);
    Tensor { shape, data }
}

/// Channel-wise concatenation in the given order.
pub fn route_concat<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>, NnError> {
    let first = inputs.first().ok_or_else(|| NnError::shape(None, "route with no inputs".into()))?.shape();
    let mut channels = 0;
    for t in inputs {
        let s = t.shape();
        if (s.height, s.width) != (first.height, first.width) {
            return Err(NnError::shape(None, format!("route inputs {first} and {s} differ spatially")));
        }
        channels += s.channels;
    }
    let mut data = Vec::with_capacity(channels * first.height * first.width);
    for t in inputs {
        data.extend_from_slice(t.data());
    }
    Tensor::new(Shape::new(channels, first.height, first.width), data)
}

/// Elementwise residual sum followed by the activation.
pub fn shortcut_add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, activation: Activation) -> Result<Tensor<T>, NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::shape(None, format!("shortcut {} vs {}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| activate(x + y, activation)).collect();
    Tensor::new(a.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(c: usize, h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(Shape::new(c, h, w), v.to_vec()).unwrap()
    }

    #[test]
    fn activation_conventions() {
        assert!((activate(-1.0f64, Activation::Leaky) + 0.1).abs() < 1e-15);
        assert_eq!(activate(-1.0f64, Activation::Relu), 0.0);
        assert_eq!(activate(2.0f64, Activation::Leaky), 2.0);
        assert_eq!(activate(2.0f64, Activation::Relu), 2.0);
        assert_eq!(activate(-3.0f64, Activation::Linear), -3.0);
    }

    #[test]
    fn unit_1x1_kernel_is_identity() {
        let input = t(1, 2, 3, &[1., 2., 3., 4., 5., 6.]);
        let k = ConvKernel { filters: 1, channels: 1, size: 1, weights: vec![1.0], bias: vec![0.0] };
        assert_eq!(conv2d(&input, &k, 1, 0, Activation::Linear).unwrap(), input);
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let input = t(1, 3, 3, &[1.0; 9]);
        let k = ConvKernel { filters: 1, channels: 1, size: 3, weights: vec![1.0; 9], bias: vec![0.0] };
        let out = conv2d(&input, &k, 1, 1, Activation::Linear).unwrap();
        assert_eq!(out.get(0, 1, 1), 9.0);
        assert_eq!(out.get(0, 0, 0), 4.0);
        assert_eq!(out.get(0, 0, 1), 6.0);
    }

    #[test]
    fn conv_channel_mismatch() {
        let input = t(2, 1, 1, &[1.0, 2.0]);
        let k = ConvKernel { filters: 1, channels: 1, size: 1, weights: vec![1.0], bias: vec![0.0] };
        assert!(conv2d(&input, &k, 1, 0, Activation::Linear).is_err());
    }

    #[test]
    fn pool_basic_and_constant() {
        let out = maxpool2d(&t(1, 2, 2, &[1., 2., 3., 4.]), 2, 2);
        assert_eq!(out.data(), &[4.0]);
        let c = maxpool2d(&t(2, 5, 5, &[7.0; 50]), 2, 1);
        assert_eq!(c.shape(), Shape::new(2, 5, 5));
        assert!(c.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn stride_one_pool_replicates_edges() {
        let out = maxpool2d(&t(1, 2, 2, &[1., 5., 3., 2.]), 2, 1);
        assert_eq!(out.data(), &[5., 5., 3., 2.]);
    }

    #[test]
    fn upsample_shapes_and_values() {
        let one = upsample2x(&t(1, 1, 1, &[3.0]));
        assert_eq!(one.data(), &[3.0; 4]);
        let src = t(2, 2, 3, &(0..12).map(f64::from).collect::<Vec<_>>());
        let up = upsample2x(&src);
        assert_eq!(up.shape(), Shape::new(2, 4, 6));
        let picked = Tensor::from_fn(src.shape(), |c, y, x| up.get(c, 2 * y, 2 * x));
        assert_eq!(picked, src);
    }

    #[test]
    fn route_ordering_and_errors() {
        let a = t(2, 1, 1, &[1., 2.]);
        let b = t(3, 1, 1, &[3., 4., 5.]);
        let r = route_concat(&[&a, &b]).unwrap();
        assert_eq!(r.shape().channels, 5);
        assert_eq!(r.get(2, 0, 0), b.get(0, 0, 0));
        assert_eq!(route_concat(&[&a]).unwrap(), a);
        assert!(route_concat(&[&a, &t(1, 2, 1, &[0., 0.])]).is_err());
    }
}
