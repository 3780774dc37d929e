//! Loading networks from the files named in the run configuration.

use std::path::Path;

use tubeloc::darknet::{parse_cfg, parse_weights, NetworkDef, WeightStore, YOLOV3_TINY_CFG};
use tubeloc::nnexec::{quantize_network, Calibration, Detector, Network};

use crate::config::ModelConfig;
use crate::error::CliError;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Cfg text from `path`, or the built-in single-class YOLOv3-tiny.
pub fn cfg_text(path: Option<&Path>) -> Result<String, CliError> {
    path.map_or(Ok(YOLOV3_TINY_CFG.to_string()), read_text)
}

pub fn load_def(path: Option<&Path>) -> Result<NetworkDef, CliError> {
    let text = cfg_text(path)?;
    parse_cfg(&text).map_err(|e| match path {
        Some(p) => CliError::from(e).in_file(p),
        None => CliError::Data(format!("built-in cfg: {e}")),
    })
}

pub fn load_weights(path: &Path, def: &NetworkDef) -> Result<WeightStore, CliError> {
    parse_weights(&read_bytes(path)?, def).map_err(|e| CliError::from(e).in_file(path))
}

pub fn required_weights(model: &ModelConfig) -> Result<&Path, CliError> {
    model
        .weights
        .as_deref()
        .ok_or_else(|| CliError::Usage("no weights given: pass --weights or set [model] weights in the config".into()))
}

pub fn load_float(model: &ModelConfig) -> Result<Network<f32>, CliError> {
    let def = load_def(model.cfg.as_deref())?;
    let weights = load_weights(required_weights(model)?, &def)?;
    Ok(Network::new(&def, &weights)?)
}

/// Float network, or its 8-bit counterpart when a calibration sidecar is set.
pub fn load_detector(model: &ModelConfig) -> Result<Box<dyn Detector>, CliError> {
    let net = load_float(model)?;
    match model.calibration.as_deref() {
        None => Ok(Box::new(net)),
        Some(path) => {
            let calibration = Calibration::from_sidecar(&read_text(path)?).map_err(|e| CliError::from(e).in_file(path))?;
            Ok(Box::new(quantize_network(&net, &calibration).map_err(|e| CliError::from(e).in_file(path))?))
        }
    }
}

/// Report label: weight file stem, suffixed with the execution path.
pub fn model_label(model: &ModelConfig) -> String {
    let stem = model
        .weights
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    if model.calibration.is_some() {
        format!("{stem}-int8")
    } else {
        stem
    }
}
