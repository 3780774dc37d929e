//! Float execution of a parsed layer graph.

use crate::darknet::{
    fold_batchnorm, parse_cfg, parse_weights, Activation, LayerKind, NetworkDef, Shape, WeightStore,
};
use crate::scalar::Scalar;

use super::ops::{conv2d, maxpool2d_padded, route_concat, shortcut_add, upsample, ConvKernel};
use super::yolo::YoloHeadConfig;
use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv { kernel: ConvKernel<T>, stride: usize, pad: usize, activation: Activation },
    Maxpool { size: usize, stride: usize, padding: usize },
    Upsample { stride: usize },
    Route { layers: Vec<usize> },
    Shortcut { from: usize, activation: Activation },
    Yolo(YoloHeadConfig),
}

/// A YOLO head's raw tensor with the configuration needed to decode it.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub layer: usize,
    pub tensor: Tensor<T>,
    pub config: YoloHeadConfig,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub def: NetworkDef,
    pub layers: Vec<Layer<T>>,
    /// Which layer outputs are consumed later by a route/shortcut.
    retained: Vec<bool>,
}

impl<T: Scalar> Network<T> {
    /// Builds an executable network with batch norm folded into each conv.
    pub fn new(def: &NetworkDef, weights: &WeightStore) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(def.layers.len());
        for l in &def.layers {
            let layer = match &l.kind {
                LayerKind::Convolutional(c) => {
                    let w = weights.layer(l.index).ok_or_else(|| {
                        NnError::shape(Some(l.index), "no weights for convolutional layer".into())
                    })?;
                    if (w.filters, w.channels, w.size, w.batch_norm.is_some())
                        != (c.filters, l.input.channels, c.size, c.batch_normalize)
                    {
                        return Err(NnError::shape(Some(l.index), "weight block does not match cfg".into()));
                    }
                    Layer::Conv {
                        kernel: ConvKernel::from_folded(&fold_batchnorm(w)),
                        stride: c.stride,
                        pad: c.pad,
                        activation: c.activation,
                    }
                }
                LayerKind::Maxpool(m) => Layer::Maxpool { size: m.size, stride: m.stride, padding: m.padding },
                LayerKind::Upsample(u) => Layer::Upsample { stride: u.stride },
                LayerKind::Route(r) => Layer::Route { layers: r.layers.clone() },
                LayerKind::Shortcut(s) => Layer::Shortcut { from: s.from, activation: s.activation },
                LayerKind::Yolo(y) => {
                    Layer::Yolo(YoloHeadConfig::new(y, l.input.width, l.input.height, def.width, def.height))
                }
            };
            layers.push(layer);
        }
        Ok(Self { def: def.clone(), retained: retained_outputs(def), layers })
    }

    /// Parses cfg text and weight bytes in one step.
    pub fn load(cfg: &str, weights: &[u8]) -> Result<Self, NnError> {
        let def = parse_cfg(cfg)?;
        let store = parse_weights(weights, &def)?;
        Self::new(&def, &store)
    }

    pub fn input_shape(&self) -> Shape {
        self.def.input_shape()
    }

    /// The deployment variant: every leaky activation replaced by ReLU.
    pub fn with_relu(&self) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            match layer {
                Layer::Conv { activation, .. } | Layer::Shortcut { activation, .. } => {
                    if *activation == Activation::Leaky {
                        *activation = Activation::Relu;
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Runs all layers and returns the YOLO head tensors in layer order.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Vec<HeadOutput<T>>, NnError> {
        self.forward_inspect(input, |_, _| {})
    }

    /// Like [`forward`](Self::forward) but hands every layer output to `inspect`.
    pub fn forward_inspect(
        &self,
        input: &Tensor<T>,
        mut inspect: impl FnMut(usize, &Tensor<T>),
    ) -> Result<Vec<HeadOutput<T>>, NnError> {
        if input.shape() != self.input_shape() {
            return Err(NnError::shape(
                None,
                format!("input {} does not match network input {}", input.shape(), self.input_shape()),
            ));
        }
        let mut saved: Vec<Option<Tensor<T>>> = vec![None; self.layers.len()];
        let mut heads = Vec::new();
        let mut prev = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let ctx = |e: NnError| e.at_layer(i);
            let fetch = |j: usize| -> Result<&Tensor<T>, NnError> {
                if j + 1 == i {
                    Ok(&prev)
                } else {
                    saved[j].as_ref().ok_or_else(|| NnError::shape(Some(i), format!("output of layer {j} not retained")))
                }
            };
            let out = match layer {
                Layer::Conv { kernel, stride, pad, activation } => {
                    conv2d(&prev, kernel, *stride, *pad, *activation).map_err(ctx)?
                }
                Layer::Maxpool { size, stride, padding } => maxpool2d_padded(&prev, *size, *stride, *padding),
                Layer::Upsample { stride } => {
                    let (shape, data) = upsample(prev.shape(), prev.data(), *stride);
                    Tensor::new(shape, data)?
                }
                Layer::Route { layers } => {
                    let inputs = layers.iter().map(|&j| fetch(j)).collect::<Result<Vec<_>, _>>()?;
                    route_concat(&inputs).map_err(ctx)?
                }
                Layer::Shortcut { from, activation } => {
                    shortcut_add(&prev, fetch(*from)?, *activation).map_err(ctx)?
                }
                Layer::Yolo(config) => {
                    heads.push(HeadOutput { layer: i, tensor: prev.clone(), config: config.clone() });
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

pub(crate) fn retained_outputs(def: &NetworkDef) -> Vec<bool> {
    let mut keep = vec![false; def.layers.len()];
    for l in &def.layers {
        match &l.kind {
            LayerKind::Route(r) => r.layers.iter().for_each(|&j| keep[j] = true),
            LayerKind::Shortcut(s) => keep[s.from] = true,
            _ => {}
        }
    }
    keep
}
