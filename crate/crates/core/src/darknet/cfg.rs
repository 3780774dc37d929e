//! INI-like network-definition parser with static shape inference.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DarknetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Leaky,
    Relu,
}

impl Activation {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "leaky" => Some(Self::Leaky),
            "relu" => Some(Self::Relu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Leaky => "leaky",
            Self::Relu => "relu",
        }
    }
}

/// Tensor shape in channel-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvConfig {
    pub filters: usize,
    pub size: usize,
    pub stride: usize,
    /// Zero padding in pixels on each side.
    pub pad: usize,
    pub batch_normalize: bool,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxpoolConfig {
    pub size: usize,
    pub stride: usize,
    /// Total padding; windows start at `i * stride - padding / 2`.
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleConfig {
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteConfig {
    /// Absolute indices of the concatenated layers, in order.
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutConfig {
    /// Absolute index of the layer added to the previous output.
    pub from: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoloConfig {
    pub anchors: Vec<(f32, f32)>,
    pub mask: Vec<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Convolutional(ConvConfig),
    Maxpool(MaxpoolConfig),
    Upsample(UpsampleConfig),
    Route(RouteConfig),
    Shortcut(ShortcutConfig),
    Yolo(YoloConfig),
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Convolutional(_) => "convolutional",
            Self::Maxpool(_) => "maxpool",
            Self::Upsample(_) => "upsample",
            Self::Route(_) => "route",
            Self::Shortcut(_) => "shortcut",
            Self::Yolo(_) => "yolo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub index: usize,
    pub kind: LayerKind,
    /// Raw key/value pairs as written in the file.
    pub attributes: BTreeMap<String, String>,
    /// Keys this parser does not interpret; kept for round-tripping.
    pub unknown_keys: Vec<String>,
    pub input: Shape,
    pub output: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub net_attributes: BTreeMap<String, String>,
    pub layers: Vec<LayerDef>,
}

impl NetworkDef {
    pub fn input_shape(&self) -> Shape {
        Shape::new(self.channels, self.height, self.width)
    }

    pub fn count(&self, kind: &str) -> usize {
        self.layers.iter().filter(|l| l.kind.name() == kind).count()
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (&LayerDef, &ConvConfig)> {
        self.layers.iter().filter_map(|l| match &l.kind {
            LayerKind::Convolutional(c) => Some((l, c)),
            _ => None,
        })
    }

    pub fn yolo_layers(&self) -> impl Iterator<Item = (&LayerDef, &YoloConfig)> {
        self.layers.iter().filter_map(|l| match &l.kind {
            LayerKind::Yolo(y) => Some((l, y)),
            _ => None,
        })
    }

    /// Index of the first route layer, where the feature divider starts in
    /// the tiny topology.
    pub fn first_route(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l.kind, LayerKind::Route(_)))
    }

    /// Number of 32-bit floats the weight container must hold.
    pub fn weight_count(&self) -> usize {
        self.conv_layers()
            .map(|(l, c)| {
                let per_filter = if c.batch_normalize { 4 } else { 1 };
                c.filters * per_filter + c.filters * l.input.channels * c.size * c.size
            })
            .sum()
    }
}

const NET_KEYS: &[&str] = &[
    "batch", "subdivisions", "width", "height", "channels", "momentum", "decay", "angle",
    "saturation", "exposure", "hue", "learning_rate", "burn_in", "max_batches", "policy", "steps",
    "scales",
];
const CONV_KEYS: &[&str] = &["batch_normalize", "filters", "size", "stride", "pad", "padding", "activation"];
const MAXPOOL_KEYS: &[&str] = &["size", "stride", "padding"];
const UPSAMPLE_KEYS: &[&str] = &["stride"];
const ROUTE_KEYS: &[&str] = &["layers"];
const SHORTCUT_KEYS: &[&str] = &["from", "activation"];
const YOLO_KEYS: &[&str] = &[
    "mask", "anchors", "classes", "num", "jitter", "ignore_thresh", "truth_thresh", "random",
];

struct Section {
    name: String,
    line: usize,
    attrs: BTreeMap<String, String>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, DarknetError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| DarknetError::Syntax {
                line: line_no,
                msg: format!("unterminated section header {line:?}"),
            })?;
            sections.push(Section { name: name.trim().to_string(), line: line_no, attrs: BTreeMap::new() });
        } else {
            let (key, value) = line.split_once('=').ok_or_else(|| DarknetError::Syntax {
                line: line_no,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let section = sections.last_mut().ok_or_else(|| DarknetError::Syntax {
                line: line_no,
                msg: "key outside of any section".into(),
            })?;
            let key = key.trim().to_string();
            if section.attrs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(DarknetError::Syntax { line: line_no, msg: format!("duplicate key {key:?}") });
            }
        }
    }
    Ok(sections)
}

struct Attrs<'a> {
    layer: usize,
    kind: &'static str,
    map: &'a BTreeMap<String, String>,
}

impl Attrs<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn invalid(&self, key: &str, value: &str) -> DarknetError {
        DarknetError::InvalidValue { layer: self.layer, key: key.into(), value: value.into() }
    }

    fn required(&self, key: &str) -> Result<&str, DarknetError> {
        self.raw(key).ok_or_else(|| DarknetError::MissingKey {
            layer: self.layer,
            kind: self.kind,
            key: key.into(),
        })
    }

    fn usize_or(&self, key: &str, default: Option<usize>) -> Result<usize, DarknetError> {
        match (self.raw(key), default) {
            (Some(v), _) => v.parse().map_err(|_| self.invalid(key, v)),
            (None, Some(d)) => Ok(d),
            (None, None) => self.required(key).map(|_| 0),
        }
    }

    fn positive(&self, key: &str, default: Option<usize>) -> Result<usize, DarknetError> {
        let v = self.usize_or(key, default)?;
        if v == 0 {
            return Err(self.invalid(key, "0"));
        }
        Ok(v)
    }

    fn activation(&self, default: Option<Activation>) -> Result<Activation, DarknetError> {
        match (self.raw("activation"), default) {
            (Some(v), _) => Activation::parse(v).ok_or_else(|| self.invalid("activation", v)),
            (None, Some(d)) => Ok(d),
            (None, None) => self.required("activation").map(|_| Activation::Linear),
        }
    }

    fn int_list(&self, key: &str) -> Result<Vec<i64>, DarknetError> {
        let v = self.required(key)?;
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<i64>().map_err(|_| self.invalid(key, v)))
            .collect()
    }

    fn unknown_keys(&self, known: &[&str]) -> Vec<String> {
        let unknown: Vec<String> =
            self.map.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
        for k in &unknown {
            log::warn!("layer {} ({}): ignoring unknown key {k:?}", self.layer, self.kind);
        }
        unknown
    }
}

fn resolve(layer: usize, reference: i64) -> Result<usize, DarknetError> {
    let abs = if reference < 0 { layer as i64 + reference } else { reference };
    if abs < 0 || abs >= layer as i64 {
        return Err(DarknetError::BadReference { layer, reference });
    }
    Ok(abs as usize)
}

fn conv_out(input: usize, size: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(size).map(|v| v / stride + 1)
}

/// Parses a network definition and infers every layer's output shape.
pub fn parse_cfg(text: &str) -> Result<NetworkDef, DarknetError> {
    let mut sections = split_sections(text)?.into_iter();
    let net = match sections.next() {
        Some(s) if s.name == "net" || s.name == "network" => s,
        Some(s) if !is_layer_section(&s.name) => {
            return Err(DarknetError::UnknownSection { line: s.line, name: s.name });
        }
        _ => return Err(DarknetError::MissingNet),
    };
    let net_num = |key: &str| -> Result<usize, DarknetError> {
        let v = net.attrs.get(key).ok_or_else(|| DarknetError::MissingNetKey { key: key.into() })?;
        v.parse().ok().filter(|n| *n > 0).ok_or_else(|| DarknetError::InvalidValue {
            layer: 0,
            key: key.into(),
            value: v.clone(),
        })
    };
    let (width, height, channels) = (net_num("width")?, net_num("height")?, net_num("channels")?);
    for k in net.attrs.keys().filter(|k| !NET_KEYS.contains(&k.as_str())) {
        log::warn!("[net]: ignoring unknown key {k:?}");
    }

    let mut layers: Vec<LayerDef> = Vec::new();
    let mut current = Shape::new(channels, height, width);
    for section in sections {
        let index = layers.len();
        let kind_name: &'static str = match section.name.as_str() {
            "convolutional" | "conv" => "convolutional",
            "maxpool" | "max" => "maxpool",
            "upsample" => "upsample",
            "route" => "route",
            "shortcut" => "shortcut",
            "yolo" => "yolo",
            _ => return Err(DarknetError::UnknownSection { line: section.line, name: section.name }),
        };
        let a = Attrs { layer: index, kind: kind_name, map: &section.attrs };
        let shape_err = |msg: String| DarknetError::Shape { layer: index, msg };
        let input = current;
        let (kind, output, known) = match kind_name {
            "convolutional" => {
                let size = a.positive("size", None)?;
                let stride = a.positive("stride", None)?;
                let filters = a.positive("filters", None)?;
                let activation = a.activation(None)?;
                let pad = match a.raw("padding") {
                    Some(_) => a.usize_or("padding", None)?,
                    None if a.usize_or("pad", Some(0))? != 0 => size / 2,
                    None => 0,
                };
                let batch_normalize = a.usize_or("batch_normalize", Some(0))? != 0;
                let h = conv_out(input.height, size, stride, pad)
                    .ok_or_else(|| shape_err(format!("kernel {size} larger than padded input {input}")))?;
                let w = conv_out(input.width, size, stride, pad)
                    .ok_or_else(|| shape_err(format!("kernel {size} larger than padded input {input}")))?;
                let cfg = ConvConfig { filters, size, stride, pad, batch_normalize, activation };
                (LayerKind::Convolutional(cfg), Shape::new(filters, h, w), CONV_KEYS)
            }
            "maxpool" => {
                let stride = a.positive("stride", Some(1))?;
                let size = a.positive("size", Some(stride))?;
                let padding = a.usize_or("padding", Some(size - 1))?;
                let out = |d: usize| (d + padding).checked_sub(size).map(|v| v / stride + 1);
                let (h, w) = out(input.height)
                    .zip(out(input.width))
                    .ok_or_else(|| shape_err(format!("pool window {size} larger than input {input}")))?;
                (
                    LayerKind::Maxpool(MaxpoolConfig { size, stride, padding }),
                    Shape::new(input.channels, h, w),
                    MAXPOOL_KEYS,
                )
            }
            "upsample" => {
                let stride = a.positive("stride", Some(2))?;
                (
                    LayerKind::Upsample(UpsampleConfig { stride }),
                    Shape::new(input.channels, input.height * stride, input.width * stride),
                    UPSAMPLE_KEYS,
                )
            }
            "route" => {
                let refs = a.int_list("layers")?;
                if refs.is_empty() {
                    return Err(a.invalid("layers", ""));
                }
                let resolved = refs.iter().map(|&r| resolve(index, r)).collect::<Result<Vec<_>, _>>()?;
                let first = layers[resolved[0]].output;
                let mut out = Shape::new(0, first.height, first.width);
                for &r in &resolved {
                    let s = layers[r].output;
                    if (s.height, s.width) != (first.height, first.width) {
                        return Err(shape_err(format!(
                            "route inputs disagree spatially: {} vs {}",
                            first, s
                        )));
                    }
                    out.channels += s.channels;
                }
                (LayerKind::Route(RouteConfig { layers: resolved }), out, ROUTE_KEYS)
            }
            "shortcut" => {
                let refs = a.int_list("from")?;
                if refs.len() != 1 {
                    return Err(a.invalid("from", a.raw("from").unwrap_or("")));
                }
                let from = resolve(index, refs[0])?;
                if layers[from].output != input {
                    return Err(shape_err(format!(
                        "shortcut from layer {from} has shape {}, expected {}",
                        layers[from].output, input
                    )));
                }
                let activation = a.activation(Some(Activation::Linear))?;
                (LayerKind::Shortcut(ShortcutConfig { from, activation }), input, SHORTCUT_KEYS)
            }
            _ => {
                let classes = a.positive("classes", None)?;
                let flat = a.int_list("anchors")?;
                if flat.len() % 2 != 0 || flat.iter().any(|&v| v <= 0) {
                    return Err(a.invalid("anchors", a.raw("anchors").unwrap_or("")));
                }
                let anchors: Vec<(f32, f32)> = flat.chunks(2).map(|p| (p[0] as f32, p[1] as f32)).collect();
                let mask = a
                    .int_list("mask")?
                    .into_iter()
                    .map(|m| usize::try_from(m).ok().filter(|&m| m < anchors.len()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| a.invalid("mask", a.raw("mask").unwrap_or("")))?;
                let expect = mask.len() * (5 + classes);
                if input.channels != expect {
                    return Err(shape_err(format!(
                        "yolo head expects {expect} channels ({} anchors x (5 + {classes})), input has {}",
                        mask.len(),
                        input.channels
                    )));
                }
                (LayerKind::Yolo(YoloConfig { anchors, mask, classes }), input, YOLO_KEYS)
            }
        };
        let unknown_keys = a.unknown_keys(known);
        current = output;
        layers.push(LayerDef { index, kind, attributes: section.attrs, unknown_keys, input, output });
    }
    Ok(NetworkDef { width, height, channels, net_attributes: net.attrs, layers })
}

fn is_layer_section(name: &str) -> bool {
    matches!(name, "convolutional" | "conv" | "maxpool" | "max" | "upsample" | "route" | "shortcut" | "yolo")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darknet::{YOLOV3_CFG, YOLOV3_TINY_CFG};

    const MINIMAL: &str = "[net]\nwidth=8\nheight=6\nchannels=3\n\n[convolutional]\nfilters=1\nsize=3\nstride=1\npad=1\nactivation=leaky\n";

    #[test]
    fn minimal_same_padding_conv() {
        let net = parse_cfg(MINIMAL).unwrap();
        assert_eq!(net.layers.len(), 1);
        assert_eq!(net.layers[0].output, Shape::new(1, 6, 8));
        assert_eq!(net.weight_count(), 1 + 27);
    }

    #[test]
    fn tiny_reference_layer_census() {
        let net = parse_cfg(YOLOV3_TINY_CFG).unwrap();
        assert_eq!(net.count("convolutional"), 13);
        assert_eq!(net.count("maxpool"), 6);
        assert_eq!(net.count("route"), 2);
        assert_eq!(net.count("upsample"), 1);
        assert_eq!(net.count("yolo"), 2);
        let heads: Vec<Shape> = net.yolo_layers().map(|(l, _)| l.output).collect();
        assert_eq!(heads, vec![Shape::new(18, 13, 13), Shape::new(18, 26, 26)]);
        assert_eq!(net.first_route(), Some(17));
        // stride-1 pool keeps 13x13
        assert_eq!(net.layers[11].output, Shape::new(512, 13, 13));
        assert!(net.layers.iter().all(|l| l.unknown_keys.is_empty()));
    }

    #[test]
    fn full_reference_layer_census() {
        let net = parse_cfg(YOLOV3_CFG).unwrap();
        assert_eq!(net.layers.len(), 107);
        assert_eq!(net.count("convolutional"), 75);
        assert_eq!(net.count("shortcut"), 23);
        assert_eq!(net.count("route"), 4);
        assert_eq!(net.count("upsample"), 2);
        let heads: Vec<Shape> = net.yolo_layers().map(|(l, _)| l.output).collect();
        assert_eq!(
            heads,
            vec![Shape::new(18, 13, 13), Shape::new(18, 26, 26), Shape::new(18, 52, 52)]
        );
    }

    #[test]
    fn unknown_section_is_named() {
        let text = format!("{MINIMAL}\n[bogus]\nx=1\n");
        match parse_cfg(&text).unwrap_err() {
            DarknetError::UnknownSection { name, line } => {
                assert_eq!(name, "bogus");
                assert_eq!(line, 13);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_key_names_layer_and_key() {
        let text = "[net]\nwidth=8\nheight=8\nchannels=1\n[maxpool]\nsize=2\nstride=2\n[convolutional]\nsize=1\nstride=1\nactivation=linear\n";
        match parse_cfg(text).unwrap_err() {
            DarknetError::MissingKey { layer, key, .. } => assert_eq!((layer, key.as_str()), (1, "filters")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn route_to_future_layer_fails() {
        let text = format!("{MINIMAL}[route]\nlayers=3\n");
        assert!(matches!(parse_cfg(&text), Err(DarknetError::BadReference { layer: 1, reference: 3 })));
        let text = format!("{MINIMAL}[route]\nlayers=-2\n");
        assert!(matches!(parse_cfg(&text), Err(DarknetError::BadReference { .. })));
    }

    #[test]
    fn unknown_keys_are_kept_not_fatal() {
        let text = MINIMAL.replace("pad=1", "pad=1\nfancy_new_option=7");
        let net = parse_cfg(&text).unwrap();
        assert_eq!(net.layers[0].unknown_keys, vec!["fancy_new_option".to_string()]);
        assert_eq!(net.layers[0].attributes["fancy_new_option"], "7");
    }

    #[test]
    fn yolo_channel_mismatch_is_rejected() {
        let text = "[net]\nwidth=8\nheight=8\nchannels=1\n[convolutional]\nfilters=17\nsize=1\nstride=1\nactivation=linear\n[yolo]\nmask=0,1,2\nanchors=1,1,2,2,3,3\nclasses=1\n";
        assert!(matches!(parse_cfg(text), Err(DarknetError::Shape { layer: 1, .. })));
    }

    #[test]
    fn syntax_errors_have_line_numbers() {
        assert!(matches!(parse_cfg("[net\n"), Err(DarknetError::Syntax { line: 1, .. })));
        assert!(matches!(parse_cfg("width=3\n"), Err(DarknetError::Syntax { line: 1, .. })));
        assert!(matches!(parse_cfg(""), Err(DarknetError::MissingNet)));
    }
}
