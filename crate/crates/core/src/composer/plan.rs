//! Compiling edit scripts into per-layer schedules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bank::{rotation_path, ObjectBank};
use crate::error::{Error, Result};
use crate::generator::{GeneratorModel, LatentCode};

use super::script::{EditOp, EditScript, OpKind};
use super::Scene;

/// Layer at which removals (and room clearing) happen by default.
pub const REMOVAL_LAYER: usize = 4;
/// Layer at which insertions, shifts and rotations happen by default.
pub const INSERTION_LAYER: usize = 7;
/// First layer of the default style range; the range runs to `L`.
pub const STYLE_START: usize = 8;
/// Default pose-layer range swapped during rotation.
pub const POSE_LAYERS: [usize; 2] = [3, 6];

/// Default layer for an op. Style ops return the start of their range.
/// `_category` is accepted for per-category tuning but currently unused.
pub fn recommended_layer(kind: OpKind, _category: Option<&str>) -> usize {
    match kind {
        OpKind::Remove | OpKind::ClearRoom => REMOVAL_LAYER,
        OpKind::Insert | OpKind::Shift | OpKind::Rotate => INSERTION_LAYER,
        OpKind::RestyleObject | OpKind::GlobalStyle => STYLE_START,
    }
}

/// Canonical-pixel mask source for a scheduled action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// An asset's mask translated by `offset`.
    Asset { id: String, offset: [i64; 2] },
    /// Union of all non-background segmentation pixels.
    SceneObjects,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    /// Stored asset features translated by `offset`.
    Asset { id: String, offset: [i64; 2] },
    /// Background fill estimated from the features at that layer.
    BackgroundFill,
    /// Features synthesized from a full code set up to the layer.
    Donor { codes: Vec<LatentCode> },
}

/// One masked edit applied at a layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerAction {
    /// Index of the originating op in the script.
    pub edit: usize,
    pub object: String,
    pub priority: u32,
    pub mask: MaskSource,
    pub content: Option<Content>,
    pub style: Option<LatentCode>,
}

/// Everything needed to render an edited scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub base_codes: Vec<LatentCode>,
    /// Global code replacements, per layer.
    pub style_overrides: BTreeMap<usize, LatentCode>,
    /// Actions per layer in application order (ascending priority, stable).
    pub schedule: BTreeMap<usize, Vec<LayerAction>>,
}

impl EditPlan {
    /// Global style code in effect at `layer`.
    pub fn code(&self, layer: usize) -> &LatentCode {
        self.style_overrides
            .get(&layer)
            .unwrap_or(&self.base_codes[layer - 1])
    }

    pub fn actions(&self, layer: usize) -> &[LayerAction] {
        self.schedule.get(&layer).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Lowest layer at which two plans for the same model diverge.
    pub fn first_difference(&self, other: &EditPlan) -> Option<usize> {
        let layers = self.base_codes.len().max(other.base_codes.len());
        (1..=layers).find(|&l| {
            self.base_codes.get(l - 1) != other.base_codes.get(l - 1)
                || self.style_overrides.get(&l) != other.style_overrides.get(&l)
                || self.actions(l) != other.actions(l)
        })
    }
}

fn codes_for_layers(model: &GeneratorModel, values: &[f64]) -> Result<Vec<LatentCode>> {
    (1..=model.layer_count())
        .map(|l| {
            let w = LatentCode::new(l, values.to_vec())?;
            model.check_code(&w)?;
            Ok(w)
        })
        .collect()
}

/// Per-layer codes from `style_seed` or `code`.
fn style_codes(model: &GeneratorModel, op: &EditOp, index: usize) -> Result<Vec<LatentCode>> {
    match (&op.style_seed, &op.code) {
        (Some(seed), _) => Ok(model.sample_codes(*seed)),
        (None, Some(values)) => codes_for_layers(model, values)
            .map_err(|e| Error::parse(format!("/edits/{index}/code"), e.to_string())),
        (None, None) => Err(Error::parse(
            format!("/edits/{index}/style_seed"),
            "`style_seed` or `code` is required",
        )),
    }
}

pub(crate) fn base_codes(model: &GeneratorModel, script: &EditScript) -> Result<Vec<LatentCode>> {
    if let Some(seed) = script.base.seed {
        return Ok(model.sample_codes(seed));
    }
    let rows = script
        .base
        .codes
        .as_ref()
        .ok_or_else(|| Error::parse("/base", "`seed` or `codes` is required"))?;
    if rows.len() != model.layer_count() {
        return Err(Error::parse(
            "/base/codes",
            format!("{} codes for {} layers", rows.len(), model.layer_count()),
        ));
    }
    let codes = rows
        .iter()
        .enumerate()
        .map(|(i, v)| LatentCode::new(i + 1, v.clone()))
        .collect::<Result<Vec<_>>>()
        .and_then(|c| model.check_codes(&c).map(|_| c));
    codes.map_err(|e| Error::parse("/base/codes", e.to_string()))
}

fn check_layer(model: &GeneratorModel, layer: usize, pointer: &str) -> Result<()> {
    if (1..=model.layer_count()).contains(&layer) {
        Ok(())
    } else {
        Err(Error::parse(
            pointer,
            format!("layer {layer} outside 1..={}", model.layer_count()),
        ))
    }
}

fn check_range(model: &GeneratorModel, range: [usize; 2], pointer: &str) -> Result<()> {
    check_layer(model, range[0], pointer)?;
    check_layer(model, range[1], pointer)
}

/// Fills in every default (layers, priorities, ranges) so the script states
/// exactly what it does. Resolving a resolved script is a no-op.
pub fn resolve_script(
    script: &EditScript,
    model: &GeneratorModel,
    bank: &ObjectBank,
) -> Result<EditScript> {
    script.check()?;
    let l_max = model.layer_count();
    let mut out = script.clone();
    for (i, op) in out.edits.iter_mut().enumerate() {
        let category = match &op.object {
            Some(id) => Some(bank.get(id)?.category.clone()),
            None => None,
        };
        let rec = recommended_layer(op.op, category.as_deref()).min(l_max);
        match op.op {
            OpKind::Remove | OpKind::ClearRoom => {
                op.layer.get_or_insert(rec);
                if op.op == OpKind::Remove {
                    op.priority.get_or_insert(0);
                }
            }
            OpKind::Insert | OpKind::Shift => {
                op.layer.get_or_insert(rec);
                let asset = bank.get(op.object.as_deref().unwrap_or_default())?;
                op.priority.get_or_insert(asset.priority);
            }
            OpKind::Rotate => {
                op.layer.get_or_insert(rec);
                op.layers
                    .get_or_insert([POSE_LAYERS[0].min(l_max), POSE_LAYERS[1].min(l_max)]);
                let asset = bank.get(op.object.as_deref().unwrap_or_default())?;
                op.priority.get_or_insert(asset.priority);
            }
            OpKind::RestyleObject => {
                op.layers.get_or_insert([rec, l_max]);
                let asset = bank.get(op.object.as_deref().unwrap_or_default())?;
                op.priority.get_or_insert(asset.priority);
            }
            OpKind::GlobalStyle => {
                op.layers.get_or_insert([rec, l_max]);
            }
        }
        if let Some(l) = op.layer {
            check_layer(model, l, &format!("/edits/{i}/layer"))?;
        }
        if let Some(r) = op.layers {
            check_range(model, r, &format!("/edits/{i}/layers"))?;
        }
    }
    Ok(out)
}

fn asset_offset(op: &EditOp, bbox_center: (i64, i64)) -> [i64; 2] {
    match (op.op, op.position) {
        (OpKind::Insert, Some([x, y])) => [x - bbox_center.0, y - bbox_center.1],
        (_, Some(p)) => p,
        (_, None) => [0, 0],
    }
}

/// Compiles a script into an [`EditPlan`]. Defaults are resolved first, so
/// `compile(s)` and `compile(resolve_script(s))` agree.
pub fn compile(
    script: &EditScript,
    model: &GeneratorModel,
    bank: &ObjectBank,
    scene: Option<&Scene>,
) -> Result<EditPlan> {
    let script = resolve_script(script, model, bank)?;
    let base_codes = base_codes(model, &script)?;
    let mut style_overrides = BTreeMap::new();
    let mut schedule: BTreeMap<usize, Vec<LayerAction>> = BTreeMap::new();
    let mut push =
        |layer: usize, action: LayerAction| schedule.entry(layer).or_default().push(action);

    for (i, op) in script.edits.iter().enumerate() {
        let ptr = |field: &str| format!("/edits/{i}/{field}");
        let layer = op.layer.unwrap_or(0);
        let asset = match &op.object {
            Some(id) => Some(bank.get(id)?),
            None => None,
        };
        match op.op {
            OpKind::Remove => {
                let a = asset.expect("checked");
                push(
                    layer,
                    LayerAction {
                        edit: i,
                        object: a.id.clone(),
                        priority: op.priority.unwrap_or(0),
                        mask: MaskSource::Asset {
                            id: a.id.clone(),
                            offset: [0, 0],
                        },
                        content: Some(Content::BackgroundFill),
                        style: None,
                    },
                );
            }
            OpKind::ClearRoom => {
                if scene.is_none() {
                    return Err(Error::parse(
                        "/base/segmentation",
                        "clear_room needs a segmentation map",
                    ));
                }
                push(
                    layer,
                    LayerAction {
                        edit: i,
                        object: "room".into(),
                        priority: 0,
                        mask: MaskSource::SceneObjects,
                        content: Some(Content::BackgroundFill),
                        style: None,
                    },
                );
            }
            OpKind::Insert | OpKind::Shift => {
                let a = asset.expect("checked");
                let offset = asset_offset(op, a.bbox.center());
                a.transform(offset[0], offset[1])
                    .map_err(|e| Error::parse(ptr("position"), e.to_string()))?;
                a.features(layer)
                    .map_err(|e| Error::parse(ptr("layer"), e.to_string()))?;
                let priority = op.priority.unwrap_or(a.priority);
                if op.op == OpKind::Shift {
                    push(
                        REMOVAL_LAYER.min(model.layer_count()),
                        LayerAction {
                            edit: i,
                            object: a.id.clone(),
                            priority: 0,
                            mask: MaskSource::Asset {
                                id: a.id.clone(),
                                offset: [0, 0],
                            },
                            content: Some(Content::BackgroundFill),
                            style: None,
                        },
                    );
                }
                push(
                    layer,
                    LayerAction {
                        edit: i,
                        object: a.id.clone(),
                        priority,
                        mask: MaskSource::Asset {
                            id: a.id.clone(),
                            offset,
                        },
                        content: Some(Content::Asset {
                            id: a.id.clone(),
                            offset,
                        }),
                        style: Some(a.code(layer)?.clone()),
                    },
                );
            }
            OpKind::Rotate => {
                let a = asset.expect("checked");
                let clusters = bank.clusters(&a.category).ok_or_else(|| {
                    Error::parse(
                        ptr("object"),
                        format!("no pose clusters for category `{}`", a.category),
                    )
                })?;
                let [left, right] = op.centers.expect("checked");
                let steps = op.steps.expect("checked");
                let path = rotation_path(left, right, steps, clusters)
                    .map_err(|e| Error::parse(ptr("centers"), e.to_string()))?;
                let [lo, hi] = op.layers.expect("resolved");
                if hi >= layer {
                    return Err(Error::parse(
                        ptr("layers"),
                        format!("pose layers [{lo}, {hi}] must lie below insertion layer {layer}"),
                    ));
                }
                let pose = path.at(op.s.expect("checked"))?;
                let mut donor = a.codes.clone();
                donor[lo - 1..hi].clone_from_slice(&pose[lo - 1..hi]);
                push(
                    layer,
                    LayerAction {
                        edit: i,
                        object: a.id.clone(),
                        priority: op.priority.unwrap_or(a.priority),
                        mask: MaskSource::Asset {
                            id: a.id.clone(),
                            offset: [0, 0],
                        },
                        style: Some(donor[layer - 1].clone()),
                        content: Some(Content::Donor { codes: donor }),
                    },
                );
            }
            OpKind::RestyleObject => {
                let a = asset.expect("checked");
                let codes = style_codes(model, op, i)?;
                let offset = asset_offset(op, a.bbox.center());
                a.transform(offset[0], offset[1])
                    .map_err(|e| Error::parse(ptr("position"), e.to_string()))?;
                let [lo, hi] = op.layers.expect("resolved");
                for l in lo..=hi {
                    push(
                        l,
                        LayerAction {
                            edit: i,
                            object: a.id.clone(),
                            priority: op.priority.unwrap_or(a.priority),
                            mask: MaskSource::Asset {
                                id: a.id.clone(),
                                offset,
                            },
                            content: None,
                            style: Some(codes[l - 1].clone()),
                        },
                    );
                }
            }
            OpKind::GlobalStyle => {
                let codes = style_codes(model, op, i)?;
                let [lo, hi] = op.layers.expect("resolved");
                for l in lo..=hi {
                    style_overrides.insert(l, codes[l - 1].clone());
                }
            }
        }
    }
    for actions in schedule.values_mut() {
        actions.sort_by_key(|a| a.priority);
    }
    Ok(EditPlan {
        base_codes,
        style_overrides,
        schedule,
    })
}

/// Parses, resolves and compiles a script in one step.
pub fn parse_edit_script(
    bytes: &[u8],
    model: &GeneratorModel,
    bank: &ObjectBank,
    scene: Option<&Scene>,
) -> Result<(EditScript, EditPlan)> {
    let script = EditScript::from_json(bytes)?;
    let resolved = resolve_script(&script, model, bank)?;
    let plan = compile(&resolved, model, bank, scene)?;
    Ok((resolved, plan))
}
