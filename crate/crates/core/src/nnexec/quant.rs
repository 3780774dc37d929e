//! Post-training 8-bit quantization.
//!
//! Activations use per-tensor affine parameters from min/max calibration,
//! weights per-tensor symmetric parameters. Convolutions accumulate in
//! `i32` and requantize with a fixed-point multiplier. Leaky activations are
//! replaced by ReLU, as an integer-only accelerator requires.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::darknet::{Activation, Shape};
use crate::imgcore::{letterbox, GrayImage};

use super::network::{retained_outputs, HeadOutput, Layer, Network};
use super::ops::{conv_out_dim, generic_maxpool, im2col, upsample};
use super::tensor::image_to_tensor;
use super::yolo::YoloHeadConfig;
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: i32,
}

impl QuantParams {
    /// Affine fit of `[min, max]` (widened to contain zero) onto `[-128, 127]`.
    pub fn affine(min: f32, max: f32) -> Self {
        let lo = min.min(0.0);
        let hi = max.max(0.0);
        if hi - lo <= f32::MIN_POSITIVE {
            return Self { scale: 1.0, zero_point: 0 };
        }
        let scale = (hi - lo) / 255.0;
        let zero_point = (-128.0 - lo / scale).round().clamp(-128.0, 127.0) as i32;
        Self { scale, zero_point }
    }

    /// Symmetric fit with zero point 0 onto `[-127, 127]`.
    pub fn symmetric(abs_max: f32) -> Self {
        if abs_max <= f32::MIN_POSITIVE {
            return Self { scale: 1.0, zero_point: 0 };
        }
        Self { scale: abs_max / 127.0, zero_point: 0 }
    }

    /// Rounds half away from zero and saturates to `i8`.
    #[inline]
    pub fn quantize(&self, x: f32) -> i8 {
        ((x / self.scale).round() + self.zero_point as f32).clamp(-128.0, 127.0) as i8
    }

    #[inline]
    pub fn dequantize(&self, q: i8) -> f32 {
        self.scale * (q as i32 - self.zero_point) as f32
    }
}

/// 8-bit tensor with its affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub shape: Shape,
    pub data: Vec<i8>,
    pub params: QuantParams,
}

impl QuantTensor {
    pub fn quantize(t: &Tensor<f32>, params: QuantParams) -> Self {
        Self { shape: t.shape(), data: t.data().iter().map(|&v| params.quantize(v)).collect(), params }
    }

    pub fn dequantize(&self) -> Tensor<f32> {
        Tensor::new(self.shape, self.data.iter().map(|&q| self.params.dequantize(q)).collect())
            .expect("shape matches data")
    }

    fn requantize(&self, to: QuantParams) -> Self {
        if to == self.params {
            return self.clone();
        }
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&q| to.quantize(self.params.dequantize(q))).collect(),
            params: to,
        }
    }
}

/// Tensor names: `input`, `layer.<i>` (activation output of layer i) and
/// `layer.<i>.weights`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Calibration {
    pub params: BTreeMap<String, QuantParams>,
}

impl Calibration {
    pub fn activation_name(layer: usize) -> String {
        format!("layer.{layer}")
    }

    pub fn weight_name(layer: usize) -> String {
        format!("layer.{layer}.weights")
    }

    pub fn get(&self, name: &str) -> Option<QuantParams> {
        self.params.get(name).copied()
    }

    /// Entries in network order: input, then per layer activation before weights.
    pub fn ordered(&self) -> Vec<(&str, QuantParams)> {
        let mut entries: Vec<(&str, QuantParams)> = self.params.iter().map(|(n, p)| (n.as_str(), *p)).collect();
        entries.sort_by_key(|(n, _)| sidecar_order(n));
        entries
    }

    /// Sidecar text: one `name scale zero_point` line per tensor.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        for (name, p) in self.ordered() {
            // `{:e}` round-trips f32 exactly
            let _ = writeln!(out, "{name} {:e} {}", p.scale, p.zero_point);
        }
        out
    }

    pub fn from_sidecar(text: &str) -> Result<Self, NnError> {
        let mut params = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| NnError::Sidecar { line: i + 1, msg: msg.into() };
            let mut parts = line.split_whitespace();
            let (Some(name), Some(scale), Some(zp), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected `name scale zero_point`"));
            };
            let scale: f32 = scale.parse().map_err(|_| bad("invalid scale"))?;
            let zero_point: i32 = zp.parse().map_err(|_| bad("invalid zero point"))?;
            if !(scale > 0.0 && scale.is_finite()) || !(-128..=127).contains(&zero_point) {
                return Err(bad("scale must be positive and zero point within [-128, 127]"));
            }
            params.insert(name.to_string(), QuantParams { scale, zero_point });
        }
        Ok(Self { params })
    }
}

fn sidecar_order(name: &str) -> (usize, usize) {
    if name == "input" {
        return (0, 0);
    }
    let rest = name.trim_start_matches("layer.");
    let (idx, weights) = match rest.split_once('.') {
        Some((i, _)) => (i, 1),
        None => (rest, 0),
    };
    (idx.parse::<usize>().map_or(usize::MAX, |i| i + 1), weights)
}

#[derive(Debug, Clone, Copy)]
struct Range {
    min: f32,
    max: f32,
}

impl Range {
    fn empty() -> Self {
        Self { min: f32::INFINITY, max: f32::NEG_INFINITY }
    }

    fn observe(&mut self, values: &[f32]) {
        for &v in values {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
    }
}

/// Observes activation ranges of the deployment (ReLU) variant of `net` over
/// `images` and derives per-tensor parameters.
pub fn calibrate(net: &Network<f32>, images: &[GrayImage]) -> Result<Calibration, NnError> {
    if images.is_empty() {
        return Err(NnError::Calibration("calibration needs at least one image".into()));
    }
    let deploy = net.with_relu();
    let shape = net.input_shape();
    let mut input_range = Range::empty();
    let mut ranges = vec![Range::empty(); net.layers.len()];
    for image in images {
        let (boxed, _) = letterbox(image, shape.width.max(shape.height));
        let tensor = image_to_tensor::<f32>(&boxed, shape)?;
        input_range.observe(tensor.data());
        deploy.forward_inspect(&tensor, |i, out| ranges[i].observe(out.data()))?;
    }
    let mut params = BTreeMap::new();
    params.insert("input".to_string(), QuantParams::affine(input_range.min, input_range.max));
    for (i, (layer, range)) in deploy.layers.iter().zip(&ranges).enumerate() {
        params.insert(Calibration::activation_name(i), QuantParams::affine(range.min, range.max));
        if let Layer::Conv { kernel, .. } = layer {
            let abs_max = kernel.weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
            params.insert(Calibration::weight_name(i), QuantParams::symmetric(abs_max));
        }
    }
    Ok(Calibration { params })
}

/// Fixed-point multiplier `m0 * 2^-shift` with `m0` in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Requantizer {
    pub multiplier: i64,
    pub shift: u32,
}

impl Requantizer {
    pub fn new(real: f64) -> Self {
        if !(real > 0.0) {
            return Self { multiplier: 0, shift: 0 };
        }
        let mut exp = real.log2().floor() as i32 + 1;
        let mut m = (real / 2f64.powi(exp) * (1u64 << 31) as f64).round() as i64;
        if m == 1 << 31 {
            m /= 2;
            exp += 1;
        }
        let shift = 31 - exp;
        if shift <= 0 {
            // multipliers >= 2^31 do not occur for sane calibrations; saturate
            return Self { multiplier: (1 << 31) - 1, shift: 0 };
        }
        Self { multiplier: m, shift: shift as u32 }
    }

    /// `round_half_away(acc * real)` in 64-bit integer arithmetic.
    #[inline]
    pub fn apply(&self, acc: i32) -> i64 {
        if self.shift >= 63 {
            return 0;
        }
        let prod = acc as i64 * self.multiplier;
        if self.shift == 0 {
            return prod;
        }
        let mag = (prod.abs() + (1i64 << (self.shift - 1))) >> self.shift;
        if prod < 0 {
            -mag
        } else {
            mag
        }
    }
}

#[derive(Debug, Clone)]
pub struct QConv {
    pub filters: usize,
    pub channels: usize,
    pub size: usize,
    pub stride: usize,
    pub pad: usize,
    pub weights: Vec<i8>,
    pub weight_params: QuantParams,
    pub bias: Vec<i32>,
    pub input_params: QuantParams,
    pub output_params: QuantParams,
    pub requant: Requantizer,
    /// Clamp at the output zero point (ReLU); linear layers skip it.
    pub relu: bool,
}

impl QConv {
    fn forward(&self, x: &QuantTensor) -> Result<QuantTensor, NnError> {
        let s = x.shape;
        if s.channels != self.channels {
            return Err(NnError::shape(None, format!("conv expects {} channels, got {}", self.channels, s.channels)));
        }
        let (oh, ow) = conv_out_dim(s.height, self.size, self.stride, self.pad)
            .zip(conv_out_dim(s.width, self.size, self.stride, self.pad))
            .ok_or_else(|| NnError::shape(None, "kernel larger than input".into()))?;
        let zp = x.params.zero_point as i16;
        let centered: Vec<i16> = x.data.iter().map(|&q| q as i16 - zp).collect();
        let n = oh * ow;
        let k = self.channels * self.size * self.size;
        let col = if self.size == 1 && self.stride == 1 && self.pad == 0 {
            centered
        } else {
            im2col(&centered, s, self.size, self.stride, self.pad, oh, ow, 0i16, |v| v)
        };
        let out_zp = self.output_params.zero_point as i64;
        let lo = if self.relu { out_zp.max(-128) } else { -128 };
        let mut out = vec![0i8; self.filters * n];
        let mut acc = vec![0i32; n];
        for o in 0..self.filters {
            acc.fill(self.bias[o]);
            let wrow = &self.weights[o * k..(o + 1) * k];
            for (r, &w) in wrow.iter().enumerate() {
                let w = w as i32;
                let crow = &col[r * n..(r + 1) * n];
                for (a, &c) in acc.iter_mut().zip(crow) {
                    *a += w * c as i32;
                }
            }
            for (dst, &a) in out[o * n..(o + 1) * n].iter_mut().zip(&acc) {
                *dst = (self.requant.apply(a) + out_zp).clamp(lo, 127) as i8;
            }
        }
        Ok(QuantTensor { shape: Shape::new(self.filters, oh, ow), data: out, params: self.output_params })
    }
}

#[derive(Debug, Clone)]
pub enum QLayer {
    Conv(QConv),
    Maxpool { size: usize, stride: usize, padding: usize },
    Upsample { stride: usize },
    Route { layers: Vec<usize>, output: QuantParams },
    Shortcut { from: usize, activation: Activation, output: QuantParams },
    Yolo(YoloHeadConfig),
}

/// Integer-only executable model derived from a float network.
#[derive(Debug, Clone)]
pub struct QuantizedNetwork {
    pub input_shape: Shape,
    pub input_params: QuantParams,
    pub layers: Vec<QLayer>,
    retained: Vec<bool>,
}

/// Converts `net` to 8-bit using `calibration`; leaky becomes ReLU.
pub fn quantize_network(net: &Network<f32>, calibration: &Calibration) -> Result<QuantizedNetwork, NnError> {
    let need = |name: String, layer: Option<usize>| {
        calibration.get(&name).ok_or(NnError::MissingParams { layer, name })
    };
    let input_params = need("input".into(), None)?;
    // parameters of the tensor flowing out of each layer, as actually produced
    let mut produced: Vec<QuantParams> = Vec::with_capacity(net.layers.len());
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let incoming = if i == 0 { input_params } else { produced[i - 1] };
        let (q, out_params) = match layer {
            Layer::Conv { kernel, stride, pad, activation } => {
                let wp = need(Calibration::weight_name(i), Some(i))?;
                let op = need(Calibration::activation_name(i), Some(i))?;
                let weights = kernel
                    .weights
                    .iter()
                    .map(|&w| (w / wp.scale).round().clamp(-127.0, 127.0) as i8)
                    .collect();
                let acc_scale = incoming.scale as f64 * wp.scale as f64;
                let bias = kernel
                    .bias
                    .iter()
                    .map(|&b| (b as f64 / acc_scale).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32)
                    .collect();
                let conv = QConv {
                    filters: kernel.filters,
                    channels: kernel.channels,
                    size: kernel.size,
                    stride: *stride,
                    pad: *pad,
                    weights,
                    weight_params: wp,
                    bias,
                    input_params: incoming,
                    output_params: op,
                    requant: Requantizer::new(acc_scale / op.scale as f64),
                    relu: *activation != Activation::Linear,
                };
                (QLayer::Conv(conv), op)
            }
            Layer::Maxpool { size, stride, padding } => {
                (QLayer::Maxpool { size: *size, stride: *stride, padding: *padding }, incoming)
            }
            Layer::Upsample { stride } => (QLayer::Upsample { stride: *stride }, incoming),
            Layer::Route { layers } => {
                let op = need(Calibration::activation_name(i), Some(i))?;
                (QLayer::Route { layers: layers.clone(), output: op }, op)
            }
            Layer::Shortcut { from, activation } => {
                let op = need(Calibration::activation_name(i), Some(i))?;
                let activation = if *activation == Activation::Leaky { Activation::Relu } else { *activation };
                (QLayer::Shortcut { from: *from, activation, output: op }, op)
            }
            Layer::Yolo(cfg) => (QLayer::Yolo(cfg.clone()), incoming),
        };
        layers.push(q);
        produced.push(out_params);
    }
    Ok(QuantizedNetwork {
        input_shape: net.input_shape(),
        input_params,
        layers,
        retained: retained_outputs(&net.def),
    })
}

impl QuantizedNetwork {
    /// Quantizes the float input, runs the integer graph, and returns the
    /// dequantized head tensors.
    pub fn forward(&self, input: &Tensor<f32>) -> Result<Vec<HeadOutput<f32>>, NnError> {
        self.forward_inspect(input, |_, _| {})
    }

    pub fn forward_inspect(
        &self,
        input: &Tensor<f32>,
        mut inspect: impl FnMut(usize, &QuantTensor),
    ) -> Result<Vec<HeadOutput<f32>>, NnError> {
        if input.shape() != self.input_shape {
            return Err(NnError::shape(None, format!("input {} does not match {}", input.shape(), self.input_shape)));
        }
        let mut saved: Vec<Option<QuantTensor>> = vec![None; self.layers.len()];
        let mut heads = Vec::new();
        let mut prev = QuantTensor::quantize(input, self.input_params);
        for (i, layer) in self.layers.iter().enumerate() {
            let fetch = |j: usize| -> Result<&QuantTensor, NnError> {
                if j + 1 == i {
                    Ok(&prev)
                } else {
                    saved[j].as_ref().ok_or_else(|| NnError::shape(Some(i), format!("output of layer {j} not retained")))
                }
            };
            let out = match layer {
                QLayer::Conv(c) => c.forward(&prev).map_err(|e| e.at_layer(i))?,
                QLayer::Maxpool { size, stride, padding } => {
                    let (shape, data) = generic_maxpool(prev.shape, &prev.data, *size, *stride, *padding, i8::MIN, i8::max)
                        .expect("pool shape");
                    QuantTensor { shape, data, params: prev.params }
                }
                QLayer::Upsample { stride } => {
                    let (shape, data) = upsample(prev.shape, &prev.data, *stride);
                    QuantTensor { shape, data, params: prev.params }
                }
                QLayer::Route { layers, output } => {
                    let parts = layers.iter().map(|&j| fetch(j)).collect::<Result<Vec<_>, _>>()?;
                    let first = parts[0].shape;
                    let mut data = Vec::new();
                    let mut channels = 0;
                    for p in &parts {
                        if (p.shape.height, p.shape.width) != (first.height, first.width) {
                            return Err(NnError::shape(Some(i), "route inputs differ spatially".into()));
                        }
                        channels += p.shape.channels;
                        data.extend(p.requantize(*output).data);
                    }
                    QuantTensor { shape: Shape::new(channels, first.height, first.width), data, params: *output }
                }
                QLayer::Shortcut { from, activation, output } => {
                    let other = fetch(*from)?;
                    if other.shape != prev.shape {
                        return Err(NnError::shape(Some(i), "shortcut shapes differ".into()));
                    }
                    let data = prev
                        .data
                        .iter()
                        .zip(&other.data)
                        .map(|(&a, &b)| {
                            let v = prev.params.dequantize(a) + other.params.dequantize(b);
                            output.quantize(super::ops::activate(v, *activation))
                        })
                        .collect();
                    QuantTensor { shape: prev.shape, data, params: *output }
                }
                QLayer::Yolo(cfg) => {
                    heads.push(HeadOutput { layer: i, tensor: prev.dequantize(), config: cfg.clone() });
                    prev.clone()
                }
            };
            inspect(i, &out);
            if self.retained[i] {
                saved[i] = Some(out.clone());
            }
            prev = out;
        }
        Ok(heads)
    }
}
