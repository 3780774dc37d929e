//! Copies the early (backbone) layers of one trained model into another.

use super::cfg::NetworkDef;
use super::weights::WeightStore;
use super::DarknetError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransplantPlan {
    /// First layer index that is *not* copied.
    pub cutoff: usize,
    pub source: String,
    pub dest: String,
}

impl TransplantPlan {
    pub fn new(cutoff: usize) -> Self {
        Self { cutoff, source: "source".into(), dest: "dest".into() }
    }

    /// Cuts where the feature divider begins: the first route layer, or the
    /// whole network when there is none.
    pub fn default_for(net: &NetworkDef) -> Self {
        Self::new(net.first_route().unwrap_or(net.layers.len()))
    }
}

/// Returns `dest` with every convolutional block below `plan.cutoff`
/// replaced by the matching block of `source`.
pub fn transplant_backbone(
    source: &WeightStore,
    dest: &WeightStore,
    plan: &TransplantPlan,
) -> Result<WeightStore, DarknetError> {
    let limit = source.layer_count.min(dest.layer_count);
    if plan.cutoff > limit {
        return Err(DarknetError::Cutoff { cutoff: plan.cutoff, layers: limit });
    }
    let mut out = dest.clone();
    for slot in out.layers.iter_mut().filter(|l| l.layer < plan.cutoff) {
        let src = source.layer(slot.layer).ok_or_else(|| DarknetError::TransplantMismatch {
            layer: slot.layer,
            msg: format!("{} has no convolutional layer here", plan.source),
        })?;
        if !src.same_shape(slot) {
            return Err(DarknetError::TransplantMismatch {
                layer: slot.layer,
                msg: format!(
                    "{}: {}x{}x{}x{} bn={} vs {}: {}x{}x{}x{} bn={}",
                    plan.source, src.filters, src.channels, src.size, src.size, src.batch_norm.is_some(),
                    plan.dest, slot.filters, slot.channels, slot.size, slot.size, slot.batch_norm.is_some(),
                ),
            });
        }
        *slot = src.clone();
    }
    // source convs below the cutoff that dest lacks also mean the graphs differ
    if let Some(extra) = source.layers.iter().find(|l| l.layer < plan.cutoff && dest.layer(l.layer).is_none()) {
        return Err(DarknetError::TransplantMismatch {
            layer: extra.layer,
            msg: format!("{} has no convolutional layer here", plan.dest),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darknet::{parse_cfg, YOLOV3_TINY_CFG};

    fn filled(v: f32) -> WeightStore {
        let net = parse_cfg(YOLOV3_TINY_CFG).unwrap();
        let mut s = WeightStore::zeros(&net);
        for l in &mut s.layers {
            l.kernel.iter_mut().for_each(|k| *k = v + l.layer as f32);
        }
        s
    }

    #[test]
    fn cutoff_zero_is_identity() {
        let (a, b) = (filled(1.0), filled(100.0));
        assert_eq!(transplant_backbone(&a, &b, &TransplantPlan::new(0)).unwrap(), b);
    }

    #[test]
    fn full_cutoff_copies_everything_but_header() {
        let a = filled(1.0);
        let mut b = filled(100.0);
        b.header.seen = 999;
        let out = transplant_backbone(&a, &b, &TransplantPlan::new(a.layer_count)).unwrap();
        assert_eq!(out.layers, a.layers);
        assert_eq!(out.header.seen, 999);
    }

    #[test]
    fn split_at_default_cutoff_is_idempotent() {
        let net = parse_cfg(YOLOV3_TINY_CFG).unwrap();
        let plan = TransplantPlan::default_for(&net);
        assert_eq!(plan.cutoff, 17);
        let (a, b) = (filled(1.0), filled(100.0));
        let once = transplant_backbone(&a, &b, &plan).unwrap();
        for l in &once.layers {
            let expect = if l.layer < 17 { a.layer(l.layer) } else { b.layer(l.layer) };
            assert_eq!(Some(l), expect);
        }
        assert_eq!(transplant_backbone(&a, &once, &plan).unwrap(), once);
    }

    #[test]
    fn mismatch_names_first_layer() {
        let a = filled(1.0);
        let mut b = filled(2.0);
        b.layers[2].filters = 7;
        match transplant_backbone(&a, &b, &TransplantPlan::new(17)).unwrap_err() {
            DarknetError::TransplantMismatch { layer, .. } => assert_eq!(layer, 4),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            transplant_backbone(&a, &b, &TransplantPlan::new(99)),
            Err(DarknetError::Cutoff { .. })
        ));
    }
}
