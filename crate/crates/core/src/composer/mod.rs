//! Edit scripts, their compilation into per-layer plans, and execution.

mod exec;
mod plan;
mod script;
mod session;

use crate::layout::{parse_layout, Layout, LayoutOptions, SegmentationMap};

pub use exec::{execute_plan, PlanRun, Resources};
pub use plan::{
    compile, parse_edit_script, recommended_layer, resolve_script, Content, EditPlan, LayerAction,
    MaskSource, INSERTION_LAYER, POSE_LAYERS, REMOVAL_LAYER, STYLE_START,
};
pub use script::{BaseSpec, EditOp, EditScript, OpKind};
pub use session::Session;

/// A segmentation map and, when it parses, its room layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub segmentation: SegmentationMap,
    pub layout: Option<Layout>,
}

impl Scene {
    /// Parses the layout; a partial layout only downgrades fills to the global mean.
    pub fn new(segmentation: SegmentationMap) -> Self {
        let layout = match parse_layout(&segmentation, &LayoutOptions::default()) {
            Ok(l) => Some(l),
            Err(e) => {
                log::warn!("layout unavailable, background fills fall back to global means: {e}");
                None
            }
        };
        Self {
            segmentation,
            layout,
        }
    }
}
