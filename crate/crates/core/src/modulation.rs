//! Content and style modulation over feature maps.

use crate::error::{Error, Result};
use crate::generator::{FeatureMap, GeneratorModel, LatentCode};
use crate::mask::LayerMask;

/// Object content `F_o`, its effective mask `m_o`, and an optional style code `w_o`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPatch {
    pub features: FeatureMap,
    pub mask: LayerMask,
    pub style: Option<LatentCode>,
}

impl RegionPatch {
    pub fn new(features: FeatureMap, mask: LayerMask) -> Self {
        Self {
            features,
            mask,
            style: None,
        }
    }

    pub fn with_style(mut self, w: LatentCode) -> Self {
        self.style = Some(w);
        self
    }
}

fn check_compatible(f: &FeatureMap, other: &FeatureMap, mask: &LayerMask) -> Result<()> {
    if !f.same_shape(other) {
        return Err(Error::contract(format!(
            "patch features {:?} do not match host {:?}",
            other.shape(),
            f.shape()
        )));
    }
    if (mask.height, mask.width) != (f.height, f.width) {
        return Err(Error::contract(format!(
            "mask {}x{} does not match features {}x{}",
            mask.height, mask.width, f.height, f.width
        )));
    }
    if f.layer != other.layer || f.layer != mask.layer {
        return Err(Error::contract(format!(
            "layer mismatch: host {}, patch {}, mask {}",
            f.layer, other.layer, mask.layer
        )));
    }
    if let Some(v) = mask.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::contract(format!("mask value {v} outside [0,1]")));
    }
    Ok(())
}

/// `dst <- dst * (1 - m) + src * m`, leaving `m == 0` pixels untouched and
/// copying `src` exactly where `m == 1`.
pub(crate) fn blend_into(dst: &mut FeatureMap, src: &FeatureMap, mask: &LayerMask) {
    let n = dst.plane_len();
    for c in 0..dst.channels {
        let d = &mut dst.data[c * n..(c + 1) * n];
        let s = &src.data[c * n..(c + 1) * n];
        for ((dv, sv), &m) in d.iter_mut().zip(s).zip(&mask.values) {
            if m == 0.0 {
                continue;
            }
            *dv = if m == 1.0 {
                *sv
            } else {
                let m = m as f64;
                (*dv as f64 * (1.0 - m) + *sv as f64 * m) as f32
            };
        }
    }
}

/// Content modulation: `F * (1 - m_o) + F_o * m_o`.
pub fn cmod(f: &FeatureMap, patch: &RegionPatch) -> Result<FeatureMap> {
    check_compatible(f, &patch.features, &patch.mask)?;
    let mut out = f.clone();
    blend_into(&mut out, &patch.features, &patch.mask);
    Ok(out)
}

/// Style modulation: `A(F, w) * (1 - m_o) + A(F_o, w_o) * m_o`.
pub fn smod(
    f: &FeatureMap,
    w_global: &LatentCode,
    patch: &RegionPatch,
    model: &GeneratorModel,
) -> Result<FeatureMap> {
    let w_obj = patch
        .style
        .as_ref()
        .ok_or_else(|| Error::contract("style modulation needs a patch style code"))?;
    check_compatible(f, &patch.features, &patch.mask)?;
    if w_global.layer != f.layer || w_obj.layer != f.layer {
        return Err(Error::contract(format!(
            "style codes for layers {} / {} applied at layer {}",
            w_global.layer, w_obj.layer, f.layer
        )));
    }
    let mut out = model.apply_style(f, w_global)?;
    let styled_obj = model.apply_style(&patch.features, w_obj)?;
    blend_into(&mut out, &styled_obj, &patch.mask);
    Ok(out)
}
