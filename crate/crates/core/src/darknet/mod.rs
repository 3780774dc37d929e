//! Darknet network definitions (`.cfg`) and weight containers (`.weights`).
//!
//! Both formats are byte-compatible with the reference framework so
//! published models load unmodified.

mod cfg;
mod fold;
mod transplant;
mod weights;

use thiserror::Error;

pub use cfg::{
    parse_cfg, Activation, ConvConfig, LayerDef, LayerKind, MaxpoolConfig, NetworkDef, RouteConfig,
    Shape, ShortcutConfig, UpsampleConfig, YoloConfig,
};
pub use fold::{fold_batchnorm, FoldedConv, BATCHNORM_EPS};
pub use transplant::{transplant_backbone, TransplantPlan};
pub use weights::{parse_weights, serialize_weights, BatchNormParams, ConvWeights, WeightHeader, WeightStore};

/// Reference single-class YOLOv3-tiny definition (416x416 input).
pub const YOLOV3_TINY_CFG: &str = include_str!("../../assets/yolov3-tiny-1cls.cfg");
/// Reference single-class YOLOv3 definition (416x416 input).
pub const YOLOV3_CFG: &str = include_str!("../../assets/yolov3-1cls.cfg");

#[derive(Debug, Error)]
pub enum DarknetError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("missing [net] section")]
    MissingNet,
    #[error("[net]: missing required key {key:?}")]
    MissingNetKey { key: String },
    #[error("layer {layer} ({kind}): missing required key {key:?}")]
    MissingKey { layer: usize, kind: &'static str, key: String },
    #[error("layer {layer}: invalid value {value:?} for {key:?}")]
    InvalidValue { layer: usize, key: String, value: String },
    #[error("layer {layer}: route/shortcut reference {reference} does not resolve to an earlier layer")]
    BadReference { layer: usize, reference: i64 },
    #[error("layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("weights header truncated: need {needed} bytes, have {actual}")]
    Header { needed: usize, actual: usize },
    #[error("weight stream too short: network needs {expected} floats, stream holds {actual}")]
    WeightLength { expected: usize, actual: usize },
    #[error("{bytes} trailing bytes after the last layer (cfg/weights mismatch?)")]
    TrailingBytes { bytes: usize },
    #[error("transplant cutoff {cutoff} outside 0..={layers}")]
    Cutoff { cutoff: usize, layers: usize },
    #[error("transplant: layer {layer} differs between models: {msg}")]
    TransplantMismatch { layer: usize, msg: String },
}
