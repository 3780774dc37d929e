use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::darknet::{LayerKind, NetworkDef, WeightStore, BATCHNORM_EPS};

use super::rng;

/// Every layer gets plausible random parameters: He-scaled kernels and
/// batch-norm statistics near identity. Useful for timing and numerics, not
/// for detecting anything.
pub fn random_weights(net: &NetworkDef, seed: u64) -> WeightStore {
    let mut r = rng(seed);
    let mut store = WeightStore::zeros(net);
    let small = Normal::new(0.0f32, 0.1).expect("finite");
    for w in &mut store.layers {
        let fan_in = (w.channels * w.size * w.size) as f32;
        let he = Normal::new(0.0f32, (2.0 / fan_in).sqrt()).expect("finite");
        w.kernel.iter_mut().for_each(|k| *k = he.sample(&mut r));
        w.biases.iter_mut().for_each(|b| *b = small.sample(&mut r));
        if let Some(bn) = &mut w.batch_norm {
            bn.scales.iter_mut().for_each(|s| *s = r.gen_range(0.5..1.5));
            bn.rolling_mean.iter_mut().for_each(|m| *m = small.sample(&mut r));
            bn.rolling_variance.iter_mut().for_each(|v| *v = r.gen_range(0.5..1.5));
        }
    }
    store
}

/// Shape of the hand-built brightness detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureParams {
    /// Objectness logit per unit of normalized brightness.
    pub gain: f32,
    /// Brightness (0..1) at which objectness crosses 0.5.
    pub threshold: f32,
    /// Standard deviation of the random weights on every non-signal path,
    /// relative to `1/sqrt(fan_in)`.
    pub noise: f32,
    /// Expected object side in network pixels; the head slot whose anchor
    /// area is nearest `object_px²` carries the objectness.
    pub object_px: f32,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { gain: 40.0, threshold: 0.5, noise: 0.05, object_px: 80.0, seed: 0 }
    }
}

#[derive(Clone, Copy)]
enum Signal {
    Input,
    Channel(usize),
    None,
}

/// Weights that turn a YOLO topology into a bright-object detector: filter 0
/// of every hidden convolution carries a local brightness map (box average
/// of the input, then identity taps through max-pools), and the head slot
/// whose anchor best fits `object_px` raises its objectness where that map
/// exceeds `threshold`. All other filters carry seeded noise so activations and
/// quantization ranges look like a real network.
pub fn fixture_detector_weights(net: &NetworkDef, params: &FixtureParams) -> WeightStore {
    let mut r = rng(params.seed);
    let mut store = WeightStore::zeros(net);
    let target = (params.object_px * params.object_px).ln();
    let driven = net
        .yolo_layers()
        .flat_map(|(l, y)| y.mask.iter().enumerate().map(move |(slot, &a)| (l.index, slot, y.anchors[a])))
        .min_by(|a, b| {
            let miss = |(w, h): (f32, f32)| ((w * h).ln() - target).abs();
            miss(a.2).total_cmp(&miss(b.2))
        })
        .map(|(layer, slot, _)| (layer, slot));
    let mut signal: Vec<Signal> = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let incoming = if i == 0 { Signal::Input } else { signal[i - 1] };
        let out = match &layer.kind {
            LayerKind::Convolutional(_) => {
                let w = store.layers.iter_mut().find(|w| w.layer == i).expect("conv block");
                let (c, k) = (w.channels, w.size);
                let taps = k * k;
                let at = |o: usize, ch: usize, t: usize| (o * c + ch) * taps + t;
                let noise = Normal::new(0.0f32, params.noise / ((c * taps) as f32).sqrt()).expect("finite");
                if let Some(bn) = &mut w.batch_norm {
                    bn.scales.fill(1.0);
                    bn.rolling_variance.fill(1.0 - BATCHNORM_EPS);
                }
                let head = matches!(net.layers.get(i + 1).map(|l| &l.kind), Some(LayerKind::Yolo(_)));
                if head {
                    let LayerKind::Yolo(y) = &net.layers[i + 1].kind else { unreachable!() };
                    let per = 5 + y.classes;
                    let active = driven.filter(|&(l, _)| l == i + 1).map(|(_, slot)| slot);
                    for slot in 0..y.mask.len() {
                        let obj = slot * per + 4;
                        w.biases[obj] = -20.0;
                        for cls in 0..y.classes {
                            w.biases[slot * per + 5 + cls] = 8.0;
                        }
                        for ch in 0..c {
                            for t in 0..taps {
                                w.kernel[at(obj, ch, t)] = noise.sample(&mut r);
                            }
                        }
                        if active == Some(slot) {
                            if let Signal::Channel(s) = incoming {
                                w.kernel[at(obj, s, taps / 2)] += params.gain;
                                w.biases[obj] = -params.gain * params.threshold;
                            }
                        }
                    }
                    Signal::None
                } else {
                    w.kernel.iter_mut().skip(c * taps).for_each(|v| *v = noise.sample(&mut r));
                    match incoming {
                        Signal::Input => {
                            for ch in 0..c {
                                for t in 0..taps {
                                    w.kernel[at(0, ch, t)] = 1.0 / (c * taps) as f32;
                                }
                            }
                        }
                        Signal::Channel(s) => w.kernel[at(0, s, taps / 2)] = 1.0,
                        Signal::None => {}
                    }
                    Signal::Channel(0)
                }
            }
            LayerKind::Maxpool(_) | LayerKind::Upsample(_) | LayerKind::Shortcut(_) => incoming,
            LayerKind::Route(rc) => {
                let mut offset = 0;
                let mut found = Signal::None;
                for &src in &rc.layers {
                    if let Signal::Channel(s) = signal[src] {
                        found = Signal::Channel(offset + s);
                    }
                    offset += net.layers[src].output.channels;
                }
                found
            }
            LayerKind::Yolo(_) => Signal::None,
        };
        signal.push(out);
    }
    store
}
