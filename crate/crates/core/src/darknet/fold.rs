use super::weights::ConvWeights;

/// Added to the rolling variance before the square root.
pub const BATCHNORM_EPS: f32 = 1e-6;

/// Convolution with batch normalization merged into kernel and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedConv {
    pub filters: usize,
    pub channels: usize,
    pub size: usize,
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Merges inference-time batch normalization into the convolution:
/// `k' = k * s / sqrt(v + eps)`, `b' = b - s * m / sqrt(v + eps)`.
/// Layers without normalization are copied unchanged.
pub fn fold_batchnorm(w: &ConvWeights) -> FoldedConv {
    let per_filter = w.channels * w.size * w.size;
    let mut kernel = w.kernel.clone();
    let mut bias = w.biases.clone();
    if let Some(bn) = &w.batch_norm {
        for o in 0..w.filters {
            let factor = bn.scales[o] / (bn.rolling_variance[o] + BATCHNORM_EPS).sqrt();
            for k in &mut kernel[o * per_filter..(o + 1) * per_filter] {
                *k *= factor;
            }
            bias[o] -= bn.rolling_mean[o] * factor;
        }
    }
    FoldedConv { filters: w.filters, channels: w.channels, size: w.size, kernel, bias }
}
