//! Layer-wise style-based generator.
//!
//! Layer `l` (1-based) consumes the feature map `F^(l)`, applies AdaIN with the
//! style derived from `w^(l)`, then runs one convolution block to produce
//! `F^(l+1)`. After the last layer a fixed 1x1 projection renders RGB. Only
//! styled convolution blocks are counted as layers; the RGB projection is not.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Added to the per-channel standard deviation before dividing.
pub const ADAIN_EPS: f64 = 1e-8;

const LEAKY_SLOPE: f32 = 0.2;

/// Per-layer style vector `w^(l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub layer: usize,
    pub values: Vec<f64>,
}

impl LatentCode {
    pub fn new(layer: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "latent code for layer {layer} contains {v}"
            )));
        }
        Ok(Self { layer, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The same vector re-tagged for another layer.
    pub fn for_layer(&self, layer: usize) -> Self {
        Self {
            layer,
            values: self.values.clone(),
        }
    }
}

/// Output of the learned affine map `T^(l)(w)`: one scale and one bias per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleParams {
    pub layer: usize,
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Activations `F^(l)`, stored channel-major (`C x H x W`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub layer: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(layer: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            layer,
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(
        layer: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::contract(format!(
                "feature data has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            layer,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(layer: usize, channels: usize, height: usize, width: usize, v: f32) -> Self {
        Self {
            layer,
            channels,
            height,
            width,
            data: vec![v; channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "non-finite feature value at flat index {i} of layer {}",
                self.layer
            ))),
        }
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Declared shape of one layer's input features and its style dimensionality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub style_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyConfig {
    pub seed: u64,
    pub layers: usize,
    pub channels: usize,
    pub style_dim: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layers: 14,
            channels: 16,
            style_dim: 32,
        }
    }
}

impl ToyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// How to obtain a model: a seeded toy backbone or a checkpoint manifest on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelConfig {
    Toy(ToyConfig),
    Checkpoint(std::path::PathBuf),
}

impl FromStr for ModelConfig {
    type Err = Error;

    /// `toy:<seed>` or a path to a checkpoint manifest.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("toy:") {
            Some(seed) => seed
                .parse()
                .map(|seed| ModelConfig::Toy(ToyConfig::with_seed(seed)))
                .map_err(|_| Error::Config(format!("bad toy seed in `{s}`"))),
            None => Ok(ModelConfig::Checkpoint(s.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    Toy { seed: u64 },
    Checkpoint,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerWeights {
    /// `2C x D`, rows `0..C` produce scales and rows `C..2C` biases.
    pub affine_weight: Vec<f32>,
    pub affine_bias: Vec<f32>,
    /// `C_out x C_in x 3 x 3`.
    pub conv_weight: Vec<f32>,
    pub conv_bias: Vec<f32>,
}

/// An immutable layer-wise generator `G = G^(L) o ... o G^(1)`.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    pub(crate) specs: Vec<LayerSpec>,
    pub(crate) output: OutputSpec,
    pub(crate) constant: FeatureMap,
    pub(crate) weights: Vec<LayerWeights>,
    pub(crate) to_rgb_weight: Vec<f32>,
    pub(crate) to_rgb_bias: Vec<f32>,
    kind: BackboneKind,
}

/// Resolution of layer `l` in the toy schedule.
pub fn toy_resolution(layer: usize) -> usize {
    let r = 4usize << ((layer - 1) / 2).min(16);
    r.min(256)
}

impl GeneratorModel {
    pub fn instantiate(config: &ModelConfig) -> Result<Self> {
        match config {
            ModelConfig::Toy(toy) => Self::toy(toy),
            ModelConfig::Checkpoint(path) => checkpoint::load(path),
        }
    }

    pub fn toy(config: &ToyConfig) -> Result<Self> {
        if config.layers < 2 {
            return Err(Error::Config(format!(
                "a generator needs at least 2 layers, got {}",
                config.layers
            )));
        }
        if config.channels == 0 || config.style_dim == 0 {
            return Err(Error::Config(
                "channels and style_dim must be positive".into(),
            ));
        }
        let (c, d) = (config.channels, config.style_dim);
        let specs: Vec<LayerSpec> = (1..=config.layers)
            .map(|l| {
                let r = toy_resolution(l);
                LayerSpec {
                    channels: c,
                    height: r,
                    width: r,
                    style_dim: d,
                }
            })
            .collect();
        let out_res = toy_resolution(config.layers + 1);
        let output = OutputSpec {
            channels: c,
            height: out_res,
            width: out_res,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut normal = |n: usize, std: f64| -> Vec<f32> {
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
        };

        let r1 = specs[0].height;
        let constant = FeatureMap::from_vec(1, c, r1, r1, normal(c * r1 * r1, 1.0))?;
        let affine_gain = 0.5 / (d as f64).sqrt();
        let conv_gain = (2.0 / (9 * c) as f64).sqrt();
        let mut weights = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let affine_weight = normal(2 * c * d, affine_gain);
            let mut affine_bias = vec![0.0; 2 * c];
            affine_bias[..c].fill(1.0);
            weights.push(LayerWeights {
                affine_weight,
                affine_bias,
                conv_weight: normal(c * c * 9, conv_gain),
                conv_bias: vec![0.0; c],
            });
        }
        let to_rgb_weight = normal(3 * c, 1.0 / (c as f64).sqrt());
        Self::from_parts(
            specs,
            output,
            constant,
            weights,
            to_rgb_weight,
            vec![0.0; 3],
            BackboneKind::Toy { seed: config.seed },
        )
    }

    pub(crate) fn from_parts(
        specs: Vec<LayerSpec>,
        output: OutputSpec,
        constant: FeatureMap,
        weights: Vec<LayerWeights>,
        to_rgb_weight: Vec<f32>,
        to_rgb_bias: Vec<f32>,
        kind: BackboneKind,
    ) -> Result<Self> {
        let model = Self {
            specs,
            output,
            constant,
            weights,
            to_rgb_weight,
            to_rgb_bias,
            kind,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::AdapterFormat(m));
        if self.specs.len() < 2 {
            return Err(Error::Config("a generator needs at least 2 layers".into()));
        }
        if self.weights.len() != self.specs.len() {
            return bad("weight count does not match layer count".into());
        }
        let first = self.specs[0];
        if self.constant.shape() != (first.channels, first.height, first.width) {
            return bad("constant input does not match layer 1".into());
        }
        for (i, spec) in self.specs.iter().enumerate() {
            let (c_out, h_next, w_next) = match self.specs.get(i + 1) {
                Some(n) => (n.channels, n.height, n.width),
                None => (self.output.channels, self.output.height, self.output.width),
            };
            let doubles = h_next == 2 * spec.height && w_next == 2 * spec.width;
            let keeps = h_next == spec.height && w_next == spec.width;
            if !(doubles || keeps) {
                return bad(format!(
                    "layer {} resolution {}x{} must be kept or doubled, next is {h_next}x{w_next}",
                    i + 1,
                    spec.height,
                    spec.width
                ));
            }
            let w = &self.weights[i];
            if w.affine_weight.len() != 2 * spec.channels * spec.style_dim
                || w.affine_bias.len() != 2 * spec.channels
                || w.conv_weight.len() != c_out * spec.channels * 9
                || w.conv_bias.len() != c_out
            {
                return bad(format!("layer {} weight shapes are inconsistent", i + 1));
            }
        }
        if self.to_rgb_weight.len() != 3 * self.output.channels || self.to_rgb_bias.len() != 3 {
            return bad("to-rgb projection shape is inconsistent".into());
        }
        let all = self
            .weights
            .iter()
            .flat_map(|w| {
                w.affine_weight
                    .iter()
                    .chain(&w.affine_bias)
                    .chain(&w.conv_weight)
                    .chain(&w.conv_bias)
            })
            .chain(&self.to_rgb_weight)
            .chain(&self.to_rgb_bias)
            .chain(&self.constant.data);
        for v in all {
            if !v.is_finite() {
                return bad("non-finite weight".into());
            }
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.specs.len()
    }

    pub fn kind(&self) -> &BackboneKind {
        &self.kind
    }

    /// Spec of layer `layer` (1-based).
    pub fn spec(&self, layer: usize) -> Result<LayerSpec> {
        layer
            .checked_sub(1)
            .and_then(|i| self.specs.get(i))
            .copied()
            .ok_or_else(|| {
                Error::contract(format!(
                    "layer {layer} out of range 1..={}",
                    self.layer_count()
                ))
            })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn output_spec(&self) -> OutputSpec {
        self.output
    }

    /// `(height, width)` of features entering `layer`; `L + 1` names the final features.
    pub fn resolution(&self, layer: usize) -> Result<(usize, usize)> {
        if layer == self.layer_count() + 1 {
            return Ok((self.output.height, self.output.width));
        }
        self.spec(layer).map(|s| (s.height, s.width))
    }

    /// Canonical resolution: where masks and positions are authored.
    pub fn canonical_resolution(&self) -> (usize, usize) {
        (self.output.height, self.output.width)
    }

    pub fn constant_input(&self) -> &FeatureMap {
        &self.constant
    }

    /// Hex SHA-256 over the layer specs and every weight, in declaration order.
    pub fn weight_digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.specs {
            for v in [s.channels, s.height, s.width, s.style_dim] {
                h.update((v as u64).to_le_bytes());
            }
        }
        for v in [self.output.channels, self.output.height, self.output.width] {
            h.update((v as u64).to_le_bytes());
        }
        let mut feed = |xs: &[f32]| {
            for x in xs {
                h.update(x.to_le_bytes());
            }
        };
        feed(&self.constant.data);
        for w in &self.weights {
            feed(&w.affine_weight);
            feed(&w.affine_bias);
            feed(&w.conv_weight);
            feed(&w.conv_bias);
        }
        feed(&self.to_rgb_weight);
        feed(&self.to_rgb_bias);
        hex::encode(h.finalize())
    }

    /// One style code per layer, drawn from a standard normal and broadcast across layers.
    pub fn sample_codes(&self, seed: u64) -> Vec<LatentCode> {
        let d = self.specs[0].style_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 1.0).expect("unit normal");
        let base: Vec<f64> = (0..d).map(|_| dist.sample(&mut rng)).collect();
        self.specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut v = base.clone();
                v.resize(s.style_dim, 0.0);
                LatentCode {
                    layer: i + 1,
                    values: v,
                }
            })
            .collect()
    }

    pub fn check_code(&self, w: &LatentCode) -> Result<()> {
        let spec = self.spec(w.layer)?;
        if w.dim() != spec.style_dim {
            return Err(Error::contract(format!(
                "layer {} expects style dimension {}, got {}",
                w.layer,
                spec.style_dim,
                w.dim()
            )));
        }
        if w.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite latent code at layer {}",
                w.layer
            )));
        }
        Ok(())
    }

    pub fn check_codes(&self, codes: &[LatentCode]) -> Result<()> {
        if codes.len() != self.layer_count() {
            return Err(Error::contract(format!(
                "expected {} latent codes, got {}",
                self.layer_count(),
                codes.len()
            )));
        }
        for (i, w) in codes.iter().enumerate() {
            if w.layer != i + 1 {
                return Err(Error::contract(format!(
                    "code at position {i} is tagged for layer {}",
                    w.layer
                )));
            }
            self.check_code(w)?;
        }
        Ok(())
    }

    /// Checks that `f` has the declared shape of layer `f.layer`.
    pub fn check_features(&self, f: &FeatureMap) -> Result<()> {
        let expected = if f.layer == self.layer_count() + 1 {
            (self.output.channels, self.output.height, self.output.width)
        } else {
            let s = self.spec(f.layer)?;
            (s.channels, s.height, s.width)
        };
        if f.shape() != expected {
            return Err(Error::contract(format!(
                "layer {} features are {:?}, model declares {:?}",
                f.layer,
                f.shape(),
                expected
            )));
        }
        Ok(())
    }

    /// `T^(l)(w)`.
    pub fn style_params(&self, w: &LatentCode) -> Result<StyleParams> {
        self.check_code(w)?;
        let spec = self.specs[w.layer - 1];
        let lw = &self.weights[w.layer - 1];
        let (c, d) = (spec.channels, spec.style_dim);
        let row = |r: usize| -> f64 {
            let ws = &lw.affine_weight[r * d..(r + 1) * d];
            let dot: f64 = ws.iter().zip(&w.values).map(|(a, b)| *a as f64 * b).sum();
            dot + lw.affine_bias[r] as f64
        };
        Ok(StyleParams {
            layer: w.layer,
            scale: (0..c).map(row).collect(),
            bias: (c..2 * c).map(row).collect(),
        })
    }

    /// `A(F, w)`: AdaIN of every channel with the style derived from `w`.
    pub fn apply_style(&self, f: &FeatureMap, w: &LatentCode) -> Result<FeatureMap> {
        if f.layer != w.layer {
            return Err(Error::contract(format!(
                "feature layer {} does not match code layer {}",
                f.layer, w.layer
            )));
        }
        self.check_features(f)?;
        let params = self.style_params(w)?;
        adain(f, &params)
    }

    /// `G^(l)`: 3x3 convolution, leaky ReLU, and 2x nearest upsampling on
    /// resolution-doubling layers.
    pub fn forward_layer(&self, f: &FeatureMap, layer: usize) -> Result<FeatureMap> {
        let spec = self.spec(layer)?;
        if f.layer != layer {
            return Err(Error::contract(format!(
                "forward_layer({layer}) given features of layer {}",
                f.layer
            )));
        }
        self.check_features(f)?;
        let (h_next, w_next) = self.resolution(layer + 1)?;
        let lw = &self.weights[layer - 1];
        let c_out = lw.conv_bias.len();
        let (h, w) = (spec.height, spec.width);

        let planes: Vec<Vec<f32>> = (0..c_out)
            .into_par_iter()
            .map(|co| {
                let mut acc = vec![lw.conv_bias[co]; h * w];
                for ci in 0..spec.channels {
                    let src = f.channel(ci);
                    let k = &lw.conv_weight[(co * spec.channels + ci) * 9..][..9];
                    conv3x3_accumulate(&mut acc, src, k, h, w);
                }
                for v in &mut acc {
                    if *v < 0.0 {
                        *v *= LEAKY_SLOPE;
                    }
                }
                if h_next == h {
                    acc
                } else {
                    upsample2x(&acc, h, w)
                }
            })
            .collect();
        let data = planes.concat();
        FeatureMap::from_vec(layer + 1, c_out, h_next, w_next, data)
    }

    /// Fixed 1x1 projection to three channels followed by `0.5 + 0.5 tanh(.)`.
    pub fn render_rgb(&self, f: &FeatureMap) -> Result<RgbImage> {
        if f.layer != self.layer_count() + 1 {
            return Err(Error::contract(format!(
                "render_rgb expects post-final features (layer {}), got layer {}",
                self.layer_count() + 1,
                f.layer
            )));
        }
        self.check_features(f)?;
        f.ensure_finite()?;
        let n = f.plane_len();
        let mut data = Vec::with_capacity(3 * n);
        for k in 0..3 {
            let wk = &self.to_rgb_weight[k * f.channels..(k + 1) * f.channels];
            for i in 0..n {
                let mut y = self.to_rgb_bias[k] as f64;
                for (c, wc) in wk.iter().enumerate() {
                    y += *wc as f64 * f.data[c * n + i] as f64;
                }
                data.push((0.5 + 0.5 * y.tanh()) as f32);
            }
        }
        RgbImage::from_planar(f.width, f.height, data)
    }

    /// The unedited generator path from the learned constant.
    pub fn synthesize(&self, codes: &[LatentCode]) -> Result<RgbImage> {
        let f = self.synthesize_features(codes, self.layer_count() + 1)?;
        self.render_rgb(&f)
    }

    /// Runs the unedited path and stops once features for `until` (1..=L+1) exist.
    pub fn synthesize_features(&self, codes: &[LatentCode], until: usize) -> Result<FeatureMap> {
        self.check_codes(codes)?;
        if until == 0 || until > self.layer_count() + 1 {
            return Err(Error::contract(format!("layer {until} out of range")));
        }
        let mut f = self.constant.clone();
        for l in 1..until {
            let styled = self.apply_style(&f, &codes[l - 1])?;
            f = self.forward_layer(&styled, l)?;
        }
        Ok(f)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<std::path::PathBuf> {
        checkpoint::save(self, dir)
    }
}

impl fmt::Display for GeneratorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BackboneKind::Toy { seed } => write!(f, "toy:{seed}")?,
            BackboneKind::Checkpoint => write!(f, "checkpoint")?,
        }
        write!(
            f,
            " ({} layers, output {}x{})",
            self.layer_count(),
            self.output.height,
            self.output.width
        )
    }
}

/// Adaptive instance normalization with explicit style parameters.
pub fn adain(f: &FeatureMap, style: &StyleParams) -> Result<FeatureMap> {
    if style.scale.len() != f.channels || style.bias.len() != f.channels {
        return Err(Error::contract(format!(
            "style has {} scales / {} biases for {} channels",
            style.scale.len(),
            style.bias.len(),
            f.channels
        )));
    }
    f.ensure_finite()?;
    let mut out = f.clone();
    let n = f.plane_len() as f64;
    for c in 0..f.channels {
        let plane = out.channel_mut(c);
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = plane
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var.sqrt() + ADAIN_EPS);
        let (s, b) = (style.scale[c], style.bias[c]);
        for v in plane.iter_mut() {
            *v = (((*v as f64 - mean) * inv) * s + b) as f32;
        }
    }
    Ok(out)
}

fn conv3x3_accumulate(acc: &mut [f32], src: &[f32], k: &[f32], h: usize, w: usize) {
    for ky in 0..3 {
        for kx in 0..3 {
            let wv = k[ky * 3 + kx];
            // Output (y, x) reads src (y + ky - 1, x + kx - 1) with zero padding.
            let y0 = if ky == 0 { 1 } else { 0 };
            let y1 = if ky == 2 { h - 1 } else { h };
            let x0 = if kx == 0 { 1 } else { 0 };
            let x1 = if kx == 2 { w - 1 } else { w };
            for y in y0..y1 {
                let sy = y + ky - 1;
                let out_row = &mut acc[y * w + x0..y * w + x1];
                let src_row = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                for (o, s) in out_row.iter_mut().zip(src_row) {
                    *o += wv * s;
                }
            }
        }
    }
}

fn upsample2x(plane: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; 4 * h * w];
    for y in 0..2 * h {
        let src = &plane[(y / 2) * w..(y / 2 + 1) * w];
        let dst = &mut out[y * 2 * w..(y + 1) * 2 * w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = src[x / 2];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_channel(values: &[f32]) -> FeatureMap {
        FeatureMap::from_vec(1, 1, 1, values.len(), values.to_vec()).unwrap()
    }

    fn style(scale: f64, bias: f64) -> StyleParams {
        StyleParams {
            layer: 1,
            scale: vec![scale],
            bias: vec![bias],
        }
    }

    #[test]
    fn adain_two_values() {
        let out = adain(&single_channel(&[1.0, 3.0]), &style(2.0, 5.0)).unwrap();
        assert_eq!(out.data, vec![3.0, 7.0]);
    }

    #[test]
    fn adain_constant_channel_collapses_to_bias() {
        let out = adain(&single_channel(&[4.0; 9]), &style(2.0, 5.0)).unwrap();
        assert!(out.data.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn adain_rejects_non_finite() {
        let err = adain(&single_channel(&[1.0, f32::NAN]), &style(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn toy_resolution_schedule() {
        let expected = [4, 4, 8, 8, 16, 16, 32, 32, 64, 64, 128, 128, 256, 256, 256];
        for (l, r) in expected.iter().enumerate() {
            assert_eq!(toy_resolution(l + 1), *r, "layer {}", l + 1);
        }
        let m = GeneratorModel::toy(&ToyConfig::with_seed(7)).unwrap();
        assert_eq!(m.resolution(1).unwrap(), (4, 4));
        assert_eq!(m.resolution(14).unwrap(), (256, 256));
        assert_eq!(m.resolution(15).unwrap(), (256, 256));
    }

    #[test]
    fn too_few_layers_is_config_error() {
        let cfg = ToyConfig {
            layers: 1,
            ..ToyConfig::default()
        };
        assert!(matches!(GeneratorModel::toy(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn style_layer_mismatch() {
        let m = GeneratorModel::toy(&ToyConfig::with_seed(1)).unwrap();
        let codes = m.sample_codes(3);
        let err = m.apply_style(m.constant_input(), &codes[1]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn forward_layer_out_of_range() {
        let m = GeneratorModel::toy(&ToyConfig::with_seed(1)).unwrap();
        let f = FeatureMap::zeros(15, 16, 256, 256);
        assert!(matches!(m.forward_layer(&f, 15), Err(Error::Contract(_))));
    }

    #[test]
    fn conv_matches_naive() {
        let (h, w) = (5, 6);
        let src: Vec<f32> = (0..h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        let k: Vec<f32> = (0..9).map(|i| i as f32 - 4.0).collect();
        let mut acc = vec![0.0; h * w];
        conv3x3_accumulate(&mut acc, &src, &k, h, w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0f32;
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let (sy, sx) = (y + ky - 1, x + kx - 1);
                        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            s += k[(ky * 3 + kx) as usize] * src[(sy * w as isize + sx) as usize];
                        }
                    }
                }
                let got = acc[(y * w as isize + x) as usize];
                assert!((got - s).abs() < 1e-5, "({y},{x}) {got} vs {s}");
            }
        }
    }

    #[test]
    fn model_config_parsing() {
        assert_eq!(
            "toy:9".parse::<ModelConfig>().unwrap(),
            ModelConfig::Toy(ToyConfig::with_seed(9))
        );
        assert!("toy:x".parse::<ModelConfig>().is_err());
        assert!(matches!(
            "m/manifest.json".parse::<ModelConfig>().unwrap(),
            ModelConfig::Checkpoint(_)
        ));
    }
}
