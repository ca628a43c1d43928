//! Layer-by-layer execution of an [`EditPlan`].

use std::collections::BTreeMap;

use crate::bank::ObjectBank;
use crate::error::{Error, Result};
use crate::generator::{FeatureMap, GeneratorModel};
use crate::image::RgbImage;
use crate::layout::{build_layer_fill, LayerFill};
use crate::mask::{
    resample_mask, resolve_planes, warn_equal_priority_overlaps, LayerMask, PriorityAssignment,
    RegionMask,
};
use crate::modulation::blend_into;

use super::plan::{Content, EditPlan, LayerAction, MaskSource};
use super::Scene;

/// Read-only inputs an edit run draws on.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub model: &'a GeneratorModel,
    pub bank: &'a ObjectBank,
    pub scene: Option<&'a Scene>,
}

/// Cached state of one executed plan.
#[derive(Clone, Debug)]
pub struct PlanRun {
    /// `inputs[l - 1]` is `F^(l)` as it enters layer `l`; the last entry is
    /// the final `F^(L+1)`.
    inputs: Vec<FeatureMap>,
    /// Features at layer `l` after content edits, when any were applied.
    edited: Vec<Option<FeatureMap>>,
    fills: BTreeMap<usize, LayerFill>,
    image: RgbImage,
}

impl PlanRun {
    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    /// `F^(l)` entering layer `l`, for `l` in `1..=L+1`.
    pub fn input(&self, layer: usize) -> Option<&FeatureMap> {
        layer.checked_sub(1).and_then(|i| self.inputs.get(i))
    }

    /// Features at `layer` after that layer's content edits (`L+1`: final features).
    pub fn features(&self, layer: usize) -> Option<&FeatureMap> {
        let i = layer.checked_sub(1)?;
        match self.edited.get(i) {
            Some(Some(f)) => Some(f),
            _ => self.inputs.get(i),
        }
    }

    /// Background fill computed while executing `layer`, if any.
    pub fn fill(&self, layer: usize) -> Option<&LayerFill> {
        self.fills.get(&layer)
    }

    /// Re-executes layers `start..=L` against `plan`, reusing cached inputs
    /// below `start`. On error the run is left unchanged.
    pub fn rerun_from(&mut self, res: Resources<'_>, plan: &EditPlan, start: usize) -> Result<()> {
        let l_max = res.model.layer_count();
        if start == 0 || start > l_max {
            return Err(Error::contract(format!(
                "restart layer {start} outside 1..={l_max}"
            )));
        }
        let mut inputs = Vec::with_capacity(l_max + 2 - start);
        let mut edited = Vec::with_capacity(l_max + 1 - start);
        let mut fills = BTreeMap::new();
        let mut f = self.inputs[start - 1].clone();
        for l in start..=l_max {
            let (e, next, fill) = run_layer(res, plan, l, &f)?;
            edited.push(e);
            if let Some(fill) = fill {
                fills.insert(l, fill);
            }
            inputs.push(std::mem::replace(&mut f, next));
        }
        let image = res.model.render_rgb(&f)?;
        inputs.push(f);
        self.inputs.truncate(start - 1);
        self.inputs.extend(inputs);
        self.edited.truncate(start - 1);
        self.edited.extend(edited);
        self.fills.retain(|&l, _| l < start);
        self.fills.extend(fills);
        self.image = image;
        Ok(())
    }
}

/// Runs a plan from the learned constant.
pub fn execute_plan(res: Resources<'_>, plan: &EditPlan) -> Result<PlanRun> {
    res.model.check_codes(&plan.base_codes)?;
    let mut run = PlanRun {
        inputs: vec![res.model.constant_input().clone()],
        edited: Vec::new(),
        fills: BTreeMap::new(),
        image: RgbImage::from_planar(1, 1, vec![0.0; 3])?,
    };
    run.rerun_from(res, plan, 1)?;
    Ok(run)
}

fn at_layer(layer: usize, action: &LayerAction) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Execution { .. } => e,
        other => Error::Execution {
            layer,
            object: action.object.clone(),
            source: Box::new(other),
        },
    }
}

fn canonical_mask(res: Resources<'_>, source: &MaskSource) -> Result<RegionMask> {
    match source {
        MaskSource::Asset { id, offset } => {
            Ok(res.bank.get(id)?.mask.translate(offset[0], offset[1]))
        }
        MaskSource::SceneObjects => res
            .scene
            .map(|s| s.segmentation.object_mask())
            .ok_or_else(|| Error::contract("room clearing needs a segmentation map")),
    }
}

/// One layer of the edit loop: priority-resolved content edits, then style
/// modulation, then the generator layer. Returns the edited features (when
/// content changed), the next layer's input, and the fill if one was built.
fn run_layer(
    res: Resources<'_>,
    plan: &EditPlan,
    layer: usize,
    input: &FeatureMap,
) -> Result<(Option<FeatureMap>, FeatureMap, Option<LayerFill>)> {
    let model = res.model;
    let w = plan.code(layer);
    let actions = plan.actions(layer);
    if actions.is_empty() {
        let styled = model.apply_style(input, w)?;
        return Ok((None, model.forward_layer(&styled, layer)?, None));
    }

    let canonical: Vec<RegionMask> = actions
        .iter()
        .map(|a| canonical_mask(res, &a.mask).map_err(at_layer(layer, a)))
        .collect::<Result<_>>()?;
    let raw: Vec<LayerMask> = canonical
        .iter()
        .zip(actions)
        .map(|(m, a)| resample_mask(m, layer, model).map_err(at_layer(layer, a)))
        .collect::<Result<_>>()?;
    let assignments: Vec<PriorityAssignment> = actions
        .iter()
        .map(|a| PriorityAssignment::new(a.object.clone(), a.priority))
        .collect();
    warn_equal_priority_overlaps(raw.iter().map(|m| m.values.as_slice()).zip(&assignments));
    let planes: Vec<&[f32]> = raw.iter().map(|m| m.values.as_slice()).collect();
    let priorities: Vec<u32> = actions.iter().map(|a| a.priority).collect();
    let effective: Vec<LayerMask> = resolve_planes(&planes, &priorities)
        .into_iter()
        .zip(&raw)
        .map(|(values, m)| LayerMask {
            values,
            ..m.clone()
        })
        .collect();

    let fill = if actions
        .iter()
        .any(|a| matches!(a.content, Some(Content::BackgroundFill)))
    {
        Some(
            layer_fill(res, actions, &canonical, input).map_err(|e| Error::Execution {
                layer,
                object: "background".into(),
                source: Box::new(e),
            })?,
        )
    } else {
        None
    };

    let mut host = input.clone();
    let mut edited = false;
    for (a, m) in actions.iter().zip(&effective) {
        let Some(content) = &a.content else { continue };
        let src = match content {
            Content::BackgroundFill => fill.as_ref().expect("built above").features.clone(),
            Content::Asset { id, offset } => {
                let asset = res
                    .bank
                    .get(id)
                    .and_then(|x| x.transform(offset[0], offset[1]));
                asset
                    .and_then(|x| x.features(layer).cloned())
                    .map_err(at_layer(layer, a))?
            }
            Content::Donor { codes } => model
                .synthesize_features(codes, layer)
                .map_err(at_layer(layer, a))?,
        };
        if !src.same_shape(&host) || src.layer != layer {
            return Err(at_layer(layer, a)(Error::contract(format!(
                "content {:?} at layer {} does not match host {:?}",
                src.shape(),
                src.layer,
                host.shape()
            ))));
        }
        blend_into(&mut host, &src, m);
        edited = true;
    }
    host.ensure_finite().map_err(|e| Error::Execution {
        layer,
        object: actions[0].object.clone(),
        source: Box::new(e),
    })?;

    let mut styled = model.apply_style(&host, w)?;
    for (a, m) in actions.iter().zip(&effective) {
        if let Some(w_o) = &a.style {
            let s = model.apply_style(&host, w_o).map_err(at_layer(layer, a))?;
            blend_into(&mut styled, &s, m);
        }
    }
    let next = model.forward_layer(&styled, layer)?;
    Ok((edited.then_some(host), next, fill))
}

fn layer_fill(
    res: Resources<'_>,
    actions: &[LayerAction],
    canonical: &[RegionMask],
    input: &FeatureMap,
) -> Result<LayerFill> {
    let size = res.model.canonical_resolution();
    let mut occlusion = RegionMask::zeros(size.0, size.1);
    for (a, m) in actions.iter().zip(canonical) {
        if matches!(a.content, Some(Content::BackgroundFill)) {
            occlusion = occlusion.union(m)?;
        }
    }
    let scene = res.scene;
    if let Some(s) = scene {
        occlusion = occlusion.union(&s.segmentation.object_mask())?;
    }
    let parsed = scene.and_then(|s| s.layout.as_ref().map(|l| (&s.segmentation, l)));
    build_layer_fill(input, parsed, Some(&occlusion), size)
}
