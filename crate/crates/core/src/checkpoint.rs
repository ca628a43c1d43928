//! Checkpoint adapter: a JSON manifest naming little-endian `f32` blobs.
//!
//! Blob layouts (row-major):
//! - `constant`: `C_1 x H_1 x W_1`
//! - per layer `affine_weight`: `2C x D` (rows `0..C` scale, `C..2C` bias);
//!   `affine_bias`: `2C`
//! - per layer `conv_weight`: `C_next x C x 3 x 3`; `conv_bias`: `C_next`
//! - `to_rgb_weight`: `3 x C_out`; `to_rgb_bias`: `3`
//!
//! Layer numbering counts styled convolution blocks only, starting at 1 for
//! the block that consumes the constant input. An external network whose
//! convention also counts RGB branches must be renumbered when exported.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{
    BackboneKind, FeatureMap, GeneratorModel, LayerSpec, LayerWeights, OutputSpec,
};

pub const FORMAT: &str = "logan-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub layers: Vec<LayerEntry>,
    pub output: OutputSpec,
    pub constant: String,
    pub to_rgb_weight: String,
    pub to_rgb_bias: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub style_dim: usize,
    pub affine_weight: String,
    pub affine_bias: String,
    pub conv_weight: String,
    pub conv_bias: String,
}

impl LayerEntry {
    fn spec(&self) -> LayerSpec {
        LayerSpec {
            channels: self.channels,
            height: self.height,
            width: self.width,
            style_dim: self.style_dim,
        }
    }
}

fn read_blob(base: &Path, rel: &str, expected: usize) -> Result<Vec<f32>> {
    let path = base.join(rel);
    let bytes = fs::read(&path)
        .map_err(|e| Error::AdapterFormat(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() != expected * 4 {
        return Err(Error::AdapterFormat(format!(
            "{} holds {} bytes, expected {} f32 values",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn write_blob(base: &Path, rel: &str, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = base.join(rel);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(manifest_path: &Path) -> Result<GeneratorModel> {
    let text = fs::read_to_string(manifest_path).map_err(|e| {
        Error::AdapterFormat(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::AdapterFormat(format!("bad manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::AdapterFormat(format!(
            "unknown format `{}`",
            manifest.format
        )));
    }
    if manifest.version != VERSION {
        return Err(Error::AdapterFormat(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }
    if manifest.layers.len() < 2 {
        return Err(Error::Config("a generator needs at least 2 layers".into()));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let specs: Vec<LayerSpec> = manifest.layers.iter().map(LayerEntry::spec).collect();
    let first = specs[0];
    let constant = FeatureMap::from_vec(
        1,
        first.channels,
        first.height,
        first.width,
        read_blob(
            base,
            &manifest.constant,
            first.channels * first.height * first.width,
        )?,
    )?;
    let mut weights = Vec::with_capacity(specs.len());
    for (i, entry) in manifest.layers.iter().enumerate() {
        let s = entry.spec();
        let c_next = specs
            .get(i + 1)
            .map(|n| n.channels)
            .unwrap_or(manifest.output.channels);
        weights.push(LayerWeights {
            affine_weight: read_blob(base, &entry.affine_weight, 2 * s.channels * s.style_dim)?,
            affine_bias: read_blob(base, &entry.affine_bias, 2 * s.channels)?,
            conv_weight: read_blob(base, &entry.conv_weight, c_next * s.channels * 9)?,
            conv_bias: read_blob(base, &entry.conv_bias, c_next)?,
        });
    }
    let to_rgb_weight = read_blob(base, &manifest.to_rgb_weight, 3 * manifest.output.channels)?;
    let to_rgb_bias = read_blob(base, &manifest.to_rgb_bias, 3)?;
    GeneratorModel::from_parts(
        specs,
        manifest.output,
        constant,
        weights,
        to_rgb_weight,
        to_rgb_bias,
        BackboneKind::Checkpoint,
    )
}

/// Writes `model` as a manifest plus blobs under `dir`; returns the manifest path.
pub fn save(model: &GeneratorModel, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::new();
    for (i, (spec, w)) in model.specs.iter().zip(&model.weights).enumerate() {
        let l = i + 1;
        let entry = LayerEntry {
            channels: spec.channels,
            height: spec.height,
            width: spec.width,
            style_dim: spec.style_dim,
            affine_weight: format!("layer{l:02}.affine_weight.f32"),
            affine_bias: format!("layer{l:02}.affine_bias.f32"),
            conv_weight: format!("layer{l:02}.conv_weight.f32"),
            conv_bias: format!("layer{l:02}.conv_bias.f32"),
        };
        write_blob(dir, &entry.affine_weight, &w.affine_weight)?;
        write_blob(dir, &entry.affine_bias, &w.affine_bias)?;
        write_blob(dir, &entry.conv_weight, &w.conv_weight)?;
        write_blob(dir, &entry.conv_bias, &w.conv_bias)?;
        layers.push(entry);
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        layers,
        output: model.output,
        constant: "constant.f32".into(),
        to_rgb_weight: "to_rgb_weight.f32".into(),
        to_rgb_bias: "to_rgb_bias.f32".into(),
    };
    write_blob(dir, &manifest.constant, &model.constant.data)?;
    write_blob(dir, &manifest.to_rgb_weight, &model.to_rgb_weight)?;
    write_blob(dir, &manifest.to_rgb_bias, &model.to_rgb_bias)?;
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
