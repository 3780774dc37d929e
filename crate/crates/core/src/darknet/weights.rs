//! Binary weight container: a small integer header followed by per-layer
//! little-endian `f32` blocks in network order.

use super::cfg::NetworkDef;
use super::DarknetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightHeader {
    pub major: i32,
    pub minor: i32,
    pub revision: i32,
    /// Images seen during training; stored as 64 bits for format >= 0.2.
    pub seen: u64,
}

impl WeightHeader {
    pub fn wide_seen(&self) -> bool {
        self.major * 10 + self.minor >= 2
    }

    pub fn byte_len(&self) -> usize {
        12 + if self.wide_seen() { 8 } else { 4 }
    }
}

impl Default for WeightHeader {
    fn default() -> Self {
        Self { major: 0, minor: 2, revision: 0, seen: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub scales: Vec<f32>,
    pub rolling_mean: Vec<f32>,
    pub rolling_variance: Vec<f32>,
}

/// Parameters of one convolutional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    /// Index of the layer in its network definition.
    pub layer: usize,
    pub filters: usize,
    pub channels: usize,
    pub size: usize,
    pub biases: Vec<f32>,
    pub batch_norm: Option<BatchNormParams>,
    /// `filters x channels x size x size`, row-major.
    pub kernel: Vec<f32>,
}

impl ConvWeights {
    pub fn zeros(layer: usize, filters: usize, channels: usize, size: usize, batch_norm: bool) -> Self {
        Self {
            layer,
            filters,
            channels,
            size,
            biases: vec![0.0; filters],
            batch_norm: batch_norm.then(|| BatchNormParams {
                scales: vec![0.0; filters],
                rolling_mean: vec![0.0; filters],
                rolling_variance: vec![0.0; filters],
            }),
            kernel: vec![0.0; filters * channels * size * size],
        }
    }

    pub fn float_count(&self) -> usize {
        self.biases.len()
            + self.batch_norm.as_ref().map_or(0, |b| 3 * b.scales.len())
            + self.kernel.len()
    }

    /// Same layout (kernel geometry and normalization), values ignored.
    pub fn same_shape(&self, other: &Self) -> bool {
        (self.filters, self.channels, self.size, self.batch_norm.is_some())
            == (other.filters, other.channels, other.size, other.batch_norm.is_some())
    }

    /// Blocks in on-disk order.
    fn blocks(&self) -> Vec<&[f32]> {
        match &self.batch_norm {
            Some(bn) => vec![&self.biases, &bn.scales, &bn.rolling_mean, &bn.rolling_variance, &self.kernel],
            None => vec![&self.biases, &self.kernel],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub header: WeightHeader,
    /// Layer count of the definition the store was built for.
    pub layer_count: usize,
    pub layers: Vec<ConvWeights>,
}

impl WeightStore {
    /// All-zero store matching `net`.
    pub fn zeros(net: &NetworkDef) -> Self {
        let layers = net
            .conv_layers()
            .map(|(l, c)| ConvWeights::zeros(l.index, c.filters, l.input.channels, c.size, c.batch_normalize))
            .collect();
        Self { header: WeightHeader::default(), layer_count: net.layers.len(), layers }
    }

    pub fn layer(&self, index: usize) -> Option<&ConvWeights> {
        self.layers.iter().find(|l| l.layer == index)
    }

    pub fn float_count(&self) -> usize {
        self.layers.iter().map(ConvWeights::float_count).sum()
    }
}

fn read_i32(bytes: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Slices a weight stream into per-layer blocks for `net`.
pub fn parse_weights(bytes: &[u8], net: &NetworkDef) -> Result<WeightStore, DarknetError> {
    if bytes.len() < 12 {
        return Err(DarknetError::Header { needed: 12, actual: bytes.len() });
    }
    let (major, minor, revision) = (read_i32(bytes, 0), read_i32(bytes, 4), read_i32(bytes, 8));
    let mut header = WeightHeader { major, minor, revision, seen: 0 };
    let header_len = header.byte_len();
    if bytes.len() < header_len {
        return Err(DarknetError::Header { needed: header_len, actual: bytes.len() });
    }
    header.seen = if header.wide_seen() {
        u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"))
    } else {
        read_i32(bytes, 12) as u32 as u64
    };

    let body = &bytes[header_len..];
    let expected = net.weight_count();
    let available = body.len() / 4;
    if available < expected {
        return Err(DarknetError::WeightLength { expected, actual: available });
    }
    if body.len() != expected * 4 {
        return Err(DarknetError::TrailingBytes { bytes: body.len() - expected * 4 });
    }

    let mut floats = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let mut layers = Vec::new();
    for (l, c) in net.conv_layers() {
        let n = c.filters;
        let biases = take(n);
        let batch_norm = c.batch_normalize.then(|| BatchNormParams {
            scales: take(n),
            rolling_mean: take(n),
            rolling_variance: take(n),
        });
        let kernel = take(n * l.input.channels * c.size * c.size);
        layers.push(ConvWeights { layer: l.index, filters: n, channels: l.input.channels, size: c.size, biases, batch_norm, kernel });
    }
    Ok(WeightStore { header, layer_count: net.layers.len(), layers })
}

pub fn serialize_weights(store: &WeightStore) -> Vec<u8> {
    let h = &store.header;
    let mut out = Vec::with_capacity(h.byte_len() + store.float_count() * 4);
    out.extend_from_slice(&h.major.to_le_bytes());
    out.extend_from_slice(&h.minor.to_le_bytes());
    out.extend_from_slice(&h.revision.to_le_bytes());
    if h.wide_seen() {
        out.extend_from_slice(&h.seen.to_le_bytes());
    } else {
        out.extend_from_slice(&(h.seen as u32).to_le_bytes());
    }
    for layer in &store.layers {
        for block in layer.blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}
