//! Detection module: float and 8-bit execution of the parsed network, head
//! decoding and duplicate suppression.

mod network;
mod ops;
mod quant;
mod tensor;
mod yolo;

use thiserror::Error;

use crate::darknet::DarknetError;
use crate::imgcore::{letterbox, unletterbox_box, GrayImage, ImageError, LetterboxTransform};

pub use network::{HeadOutput, Layer, Network};
pub use ops::{
    activate, conv2d, maxpool2d, maxpool2d_padded, pool_out_dim, route_concat, shortcut_add, upsample2x,
    ConvKernel, LEAKY_SLOPE,
};
pub use quant::{calibrate, quantize_network, Calibration, QConv, QLayer, QuantParams, QuantTensor, QuantizedNetwork, Requantizer};
pub use tensor::{image_to_tensor, Tensor};
pub use yolo::{nms, yolo_decode, Detection, YoloHeadConfig, CONF_THRESHOLD, NMS_IOU};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{}shape error: {msg}", layer.map(|l| format!("layer {l}: ")).unwrap_or_default())]
    Shape { layer: Option<usize>, msg: String },
    #[error("missing quantization parameters {name:?}{}", layer.map(|l| format!(" for layer {l}")).unwrap_or_default())]
    MissingParams { layer: Option<usize>, name: String },
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("calibration sidecar line {line}: {msg}")]
    Sidecar { line: usize, msg: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Darknet(#[from] DarknetError),
}

impl NnError {
    pub(crate) fn shape(layer: Option<usize>, msg: String) -> Self {
        Self::Shape { layer, msg }
    }

    pub(crate) fn at_layer(self, index: usize) -> Self {
        match self {
            Self::Shape { layer: None, msg } => Self::Shape { layer: Some(index), msg },
            other => other,
        }
    }
}

/// Thresholds applied after the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub conf_threshold: f32,
    pub nms_iou: f32,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self { conf_threshold: CONF_THRESHOLD, nms_iou: NMS_IOU }
    }
}

/// Anything that turns a frame into head tensors: the float network, its
/// quantized counterpart, or a test double.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str {
        "detector"
    }

    /// Network input shape `(channels, height, width)`.
    fn input_shape(&self) -> crate::darknet::Shape;

    fn heads(&self, input: &Tensor<f32>) -> Result<Vec<HeadOutput<f32>>, NnError>;

    /// Letterbox -> tensor -> forward -> decode all heads -> NMS -> source
    /// coordinates.
    fn detect(&self, image: &GrayImage, opts: &DetectOptions) -> Result<Vec<Detection>, NnError> {
        let (tensor, transform) = prepare(image, self.input_shape())?;
        self.detect_prepared(&tensor, &transform, opts)
    }

    fn detect_prepared(
        &self,
        tensor: &Tensor<f32>,
        transform: &LetterboxTransform,
        opts: &DetectOptions,
    ) -> Result<Vec<Detection>, NnError> {
        // suppress in network space so that pre-padded and letterboxed inputs
        // see the same boxes, then map the survivors back to the source
        let network = LetterboxTransform::identity(transform.target_w, transform.target_h);
        let mut all = Vec::new();
        for head in self.heads(tensor)? {
            all.extend(yolo_decode(&head.tensor, &head.config, &network, opts.conf_threshold));
        }
        Ok(nms(&all, opts.nms_iou)
            .into_iter()
            .filter_map(|d| unletterbox_box(&d.bbox, transform).ok().map(|bbox| Detection { bbox, ..d }))
            .collect())
    }
}

/// Letterboxes `image` to the network input and builds the stacked tensor.
pub fn prepare(image: &GrayImage, shape: crate::darknet::Shape) -> Result<(Tensor<f32>, LetterboxTransform), NnError> {
    if shape.width != shape.height {
        return Err(NnError::shape(None, format!("non-square network input {shape}")));
    }
    let (boxed, transform) = letterbox(image, shape.width);
    Ok((image_to_tensor(&boxed, shape)?, transform))
}

impl Detector for Network<f32> {
    fn name(&self) -> &str {
        "float32"
    }

    fn input_shape(&self) -> crate::darknet::Shape {
        Network::input_shape(self)
    }

    fn heads(&self, input: &Tensor<f32>) -> Result<Vec<HeadOutput<f32>>, NnError> {
        self.forward(input)
    }
}

impl Detector for QuantizedNetwork {
    fn name(&self) -> &str {
        "int8"
    }

    fn input_shape(&self) -> crate::darknet::Shape {
        self.input_shape
    }

    fn heads(&self, input: &Tensor<f32>) -> Result<Vec<HeadOutput<f32>>, NnError> {
        self.forward(input)
    }
}

/// Runs the full detection chain with `model` at `opts`.
pub fn detect(model: &dyn Detector, image: &GrayImage, opts: &DetectOptions) -> Result<Vec<Detection>, NnError> {
    model.detect(image, opts)
}
