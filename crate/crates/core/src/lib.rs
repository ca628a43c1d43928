//! Local editing of a layer-wise style-based generator through its
//! intermediate feature maps.
//!
//! The building blocks are content modulation ([`modulation::cmod`]), style
//! modulation ([`modulation::smod`]), and priority masks
//! ([`mask::resolve_priority_masks`]). [`composer`] schedules them per layer
//! while the generator runs, which is how objects are removed, inserted,
//! shifted, rotated, and restyled.

pub mod bank;
pub mod checkpoint;
pub mod composer;
pub mod error;
pub mod generator;
pub mod image;
pub mod layout;
pub mod mask;
pub mod modulation;

pub use bank::{ObjectAsset, ObjectBank, PoseClusterModel, RotationPath};
pub use composer::{EditOp, EditPlan, EditScript, OpKind, Session};
pub use error::{Error, Result};
pub use generator::{FeatureMap, GeneratorModel, LatentCode, ModelConfig, StyleParams, ToyConfig};
pub use image::RgbImage;
pub use layout::{Layout, SegmentationMap};
pub use mask::{LayerMask, PriorityAssignment, RegionMask};
pub use modulation::RegionPatch;
