//! Interactive editing sessions with incremental re-execution.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::bank::{ObjectAsset, ObjectBank};
use crate::error::{Error, Result};
use crate::generator::{FeatureMap, GeneratorModel};
use crate::image::RgbImage;
use crate::layout::Layout;
use crate::mask::RegionMask;

use super::exec::{execute_plan, PlanRun, Resources};
use super::plan::{compile, resolve_script, EditPlan};
use super::script::{BaseSpec, EditOp, EditScript, OpKind};
use super::Scene;

/// A base scene plus an ordered edit log, with cached per-layer features.
#[derive(Clone, Debug)]
pub struct Session {
    model: Arc<GeneratorModel>,
    bank: Arc<ObjectBank>,
    scene: Option<Arc<Scene>>,
    script: EditScript,
    plan: EditPlan,
    run: PlanRun,
}

impl Session {
    /// Synthesizes the base scene. `script` may already carry edits.
    pub fn new(
        model: Arc<GeneratorModel>,
        bank: Arc<ObjectBank>,
        scene: Option<Arc<Scene>>,
        script: &EditScript,
    ) -> Result<Self> {
        let script = resolve_script(script, &model, &bank)?;
        let plan = compile(&script, &model, &bank, scene.as_deref())?;
        let run = execute_plan(
            Resources {
                model: &model,
                bank: &bank,
                scene: scene.as_deref(),
            },
            &plan,
        )?;
        Ok(Self {
            model,
            bank,
            scene,
            script,
            plan,
            run,
        })
    }

    pub fn from_seed(model: Arc<GeneratorModel>, bank: Arc<ObjectBank>, seed: u64) -> Result<Self> {
        Self::new(model, bank, None, &EditScript::new(BaseSpec::seed(seed)))
    }

    fn resources(&self) -> Resources<'_> {
        Resources {
            model: &self.model,
            bank: &self.bank,
            scene: self.scene.as_deref(),
        }
    }

    pub fn model(&self) -> &GeneratorModel {
        &self.model
    }

    pub fn bank(&self) -> &ObjectBank {
        &self.bank
    }

    pub fn image(&self) -> &RgbImage {
        self.run.image()
    }

    pub fn plan(&self) -> &EditPlan {
        &self.plan
    }

    /// The resolved script: base plus every applied edit.
    pub fn script(&self) -> &EditScript {
        &self.script
    }

    pub fn log(&self) -> &[EditOp] {
        &self.script.edits
    }

    pub fn layout(&self) -> Option<&Layout> {
        self.scene.as_ref().and_then(|s| s.layout.as_ref())
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.scene.as_deref()
    }

    pub fn run(&self) -> &PlanRun {
        &self.run
    }

    /// Features at `layer` after its content edits; `L+1` gives the final map.
    pub fn features(&self, layer: usize) -> Result<&FeatureMap> {
        self.run.features(layer).ok_or_else(|| {
            Error::contract(format!(
                "layer {layer} outside 1..={}",
                self.model.layer_count() + 1
            ))
        })
    }

    /// Features entering `layer`, before any edit at that layer.
    pub fn input_features(&self, layer: usize) -> Result<&FeatureMap> {
        self.run.input(layer).ok_or_else(|| {
            Error::contract(format!(
                "layer {layer} outside 1..={}",
                self.model.layer_count() + 1
            ))
        })
    }

    /// Hex SHA-256 of the canonical script; changes with every applied edit.
    pub fn log_digest(&self) -> String {
        hex::encode(Sha256::digest(self.script.to_json().as_bytes()))
    }

    /// Appends several edits atomically. Only layers at or above the first
    /// affected one are recomputed. On error the session is unchanged.
    pub fn apply_edits(&mut self, ops: &[EditOp]) -> Result<()> {
        let mut next = self.script.clone();
        next.edits.extend(ops.iter().cloned());
        let offset = self.script.edits.len();
        let resolved =
            resolve_script(&next, &self.model, &self.bank).map_err(|e| shift_pointer(e, offset))?;
        let plan = compile(&resolved, &self.model, &self.bank, self.scene.as_deref())
            .map_err(|e| shift_pointer(e, offset))?;
        if let Some(start) = self.plan.first_difference(&plan) {
            let mut run = self.run.clone();
            run.rerun_from(self.resources(), &plan, start)?;
            self.run = run;
        }
        self.script = resolved;
        self.plan = plan;
        Ok(())
    }

    pub fn apply_edit(&mut self, op: EditOp) -> Result<()> {
        self.apply_edits(std::slice::from_ref(&op))
    }

    /// Replaces global style codes over `layers` (default: the style range).
    pub fn apply_global_style(&mut self, code: Vec<f64>, layers: Option<[usize; 2]>) -> Result<()> {
        let mut op = EditOp::new(OpKind::GlobalStyle);
        op.code = Some(code);
        op.layers = layers;
        self.apply_edit(op)
    }

    pub fn clear_room(&mut self, layer: Option<usize>) -> Result<()> {
        let mut op = EditOp::clear_room();
        op.layer = layer;
        self.apply_edit(op)
    }

    /// Rebuilds the session from scratch by replaying the log.
    pub fn replay(&self) -> Result<Session> {
        Session::new(
            self.model.clone(),
            self.bank.clone(),
            self.scene.clone(),
            &self.script,
        )
    }

    /// Lifts an object from the current edited scene.
    pub fn extract_object(
        &self,
        id: &str,
        mask: &RegionMask,
        category: &str,
        layers: &[usize],
        priority: Option<u32>,
    ) -> Result<ObjectAsset> {
        let codes: Vec<_> = (1..=self.model.layer_count())
            .map(|l| self.plan.code(l).clone())
            .collect();
        ObjectAsset::extract(
            &self.model,
            id,
            |l| self.run.input(l),
            &codes,
            mask,
            category,
            layers,
            priority,
        )
    }
}

/// Re-bases `/edits/i` pointers from the full log onto the submitted batch.
fn shift_pointer(e: Error, offset: usize) -> Error {
    match e {
        Error::Parse { pointer, message } if offset > 0 => {
            let rebased = pointer
                .strip_prefix("/edits/")
                .and_then(|rest| {
                    let (idx, tail) = rest.split_once('/').unwrap_or((rest, ""));
                    let i: usize = idx.parse().ok()?;
                    let sep = if tail.is_empty() { "" } else { "/" };
                    Some(format!("/edits/{}{sep}{tail}", i - offset.min(i)))
                })
                .unwrap_or(pointer);
            Error::Parse {
                pointer: rebased,
                message,
            }
        }
        other => other,
    }
}
