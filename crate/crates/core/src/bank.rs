//! Transplantable objects, their on-disk bank, pose clustering, and rotation paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::{FeatureMap, GeneratorModel, LatentCode};
use crate::mask::{
    area_resample, assign_priority, resample_mask, translate_plane, BBox, LayerMask, RegionMask,
};
use crate::modulation::RegionPatch;

pub const BANK_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "bank.json";

pub const DEFAULT_CLUSTER_DIMS: (usize, usize) = (32, 32);
pub const DEFAULT_CLUSTER_COUNT: usize = 4;
pub const DEFAULT_ROTATION_STEPS: usize = 10;

const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_REL_TOL: f64 = 1e-6;

/// An object lifted out of a synthesized scene.
///
/// Features are stored for the requested layers only and are zero outside the
/// cells the bounding box touches; style codes are kept for every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectAsset {
    pub id: String,
    pub category: String,
    pub priority: u32,
    pub bbox: BBox,
    /// Raw mask at canonical resolution, on the 8-bit grid.
    pub mask: RegionMask,
    pub codes: Vec<LatentCode>,
    pub layers: BTreeMap<usize, FeatureMap>,
}

/// Inclusive range of cells (along one axis of length `cells`) touched by
/// pixels `p0..=p1` of an axis of length `pixels`.
fn cell_span(p0: usize, p1: usize, pixels: usize, cells: usize) -> (usize, usize) {
    let r = pixels as f64 / cells as f64;
    let lo = (p0 as f64 / r).floor() as usize;
    let hi = (((p1 + 1) as f64 / r).ceil() as usize).saturating_sub(1);
    (lo.min(cells - 1), hi.min(cells - 1))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "object id `{id}` must be non-empty [A-Za-z0-9_.-]"
        )))
    }
}

impl ObjectAsset {
    /// Lifts the region under `mask` out of per-layer features.
    ///
    /// `features(l)` must return the scene's features entering layer `l`.
    #[allow(clippy::too_many_arguments)]
    pub fn extract<'a>(
        model: &GeneratorModel,
        id: impl Into<String>,
        features: impl Fn(usize) -> Option<&'a FeatureMap>,
        codes: &[LatentCode],
        mask: &RegionMask,
        category: &str,
        layers: &[usize],
        priority_override: Option<u32>,
    ) -> Result<Self> {
        let id = id.into();
        check_id(&id)?;
        model.check_codes(codes)?;
        let canonical = model.canonical_resolution();
        if (mask.height, mask.width) != canonical {
            return Err(Error::contract(format!(
                "mask is {}x{}, canonical resolution is {}x{}",
                mask.height, mask.width, canonical.0, canonical.1
            )));
        }
        let mask = mask.quantized();
        let bbox = mask
            .bbox()
            .ok_or_else(|| Error::contract("cannot extract an object from an empty mask"))?;
        if layers.is_empty() {
            return Err(Error::contract("extraction needs at least one layer"));
        }
        let priority = assign_priority(category, priority_override)?;
        let mut stored = BTreeMap::new();
        for &l in layers {
            model.spec(l)?;
            let f = features(l)
                .ok_or_else(|| Error::contract(format!("no cached features for layer {l}")))?;
            model.check_features(f)?;
            stored.insert(l, footprint_only(f, &bbox, canonical));
        }
        Ok(Self {
            id,
            category: category.to_string(),
            priority,
            bbox,
            mask,
            codes: codes.to_vec(),
            layers: stored,
        })
    }

    pub fn features(&self, layer: usize) -> Result<&FeatureMap> {
        self.layers.get(&layer).ok_or_else(|| {
            Error::contract(format!(
                "asset `{}` has no features for layer {layer} (stored: {:?})",
                self.id,
                self.layers.keys().collect::<Vec<_>>()
            ))
        })
    }

    pub fn code(&self, layer: usize) -> Result<&LatentCode> {
        layer
            .checked_sub(1)
            .and_then(|i| self.codes.get(i))
            .ok_or_else(|| {
                Error::contract(format!("asset `{}` has no code for layer {layer}", self.id))
            })
    }

    pub fn layer_mask(&self, layer: usize, model: &GeneratorModel) -> Result<LayerMask> {
        resample_mask(&self.mask, layer, model)
    }

    /// `(F_o, m_o, w_o)` at `layer`.
    pub fn patch(&self, layer: usize, model: &GeneratorModel) -> Result<RegionPatch> {
        Ok(RegionPatch::new(
            self.features(layer)?.clone(),
            self.layer_mask(layer, model)?,
        )
        .with_style(self.code(layer)?.clone()))
    }

    /// Translates by `(dx, dy)` canonical pixels. Feature offsets are scaled to
    /// each layer's resolution and rounded.
    pub fn transform(&self, dx: i64, dy: i64) -> Result<Self> {
        if dx == 0 && dy == 0 {
            return Ok(self.clone());
        }
        let (h, w) = (self.mask.height, self.mask.width);
        let b = self.bbox;
        let moved = (
            b.x0 as i64 + dx,
            b.y0 as i64 + dy,
            b.x1 as i64 + dx,
            b.y1 as i64 + dy,
        );
        if moved.0 < 0 || moved.1 < 0 || moved.2 >= w as i64 || moved.3 >= h as i64 {
            return Err(Error::contract(format!(
                "shift ({dx},{dy}) moves `{}` to x {}..={}, y {}..={} outside {w}x{h}",
                self.id, moved.0, moved.2, moved.1, moved.3
            )));
        }
        let mut layers = BTreeMap::new();
        for (&l, f) in &self.layers {
            let ox = (dx as f64 * f.width as f64 / w as f64).round() as i64;
            let oy = (dy as f64 * f.height as f64 / h as f64).round() as i64;
            let (cx0, cx1) = cell_span(b.x0, b.x1, w, f.width);
            let (cy0, cy1) = cell_span(b.y0, b.y1, h, f.height);
            let (nx0, nx1) = (cx0 as i64 + ox, cx1 as i64 + ox);
            let (ny0, ny1) = (cy0 as i64 + oy, cy1 as i64 + oy);
            if nx0 < 0 || ny0 < 0 || nx1 >= f.width as i64 || ny1 >= f.height as i64 {
                return Err(Error::contract(format!(
                    "shift ({dx},{dy}) pushes `{}` layer-{l} cells to x {nx0}..={nx1}, y {ny0}..={ny1} outside {}x{}",
                    self.id, f.width, f.height
                )));
            }
            let mut out = f.clone();
            for c in 0..f.channels {
                let shifted = translate_plane(f.channel(c), f.height, f.width, ox, oy);
                out.channel_mut(c).copy_from_slice(&shifted);
            }
            layers.insert(l, out);
        }
        Ok(Self {
            id: self.id.clone(),
            category: self.category.clone(),
            priority: self.priority,
            bbox: BBox {
                x0: moved.0 as usize,
                y0: moved.1 as usize,
                x1: moved.2 as usize,
                y1: moved.3 as usize,
            },
            mask: self.mask.translate(dx, dy),
            codes: self.codes.clone(),
            layers,
        })
    }

    fn blob(&self) -> Vec<u8> {
        self.layers
            .values()
            .flat_map(|f| f.data.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}

/// Zeroes every cell the bounding box does not touch.
fn footprint_only(f: &FeatureMap, bbox: &BBox, canonical: (usize, usize)) -> FeatureMap {
    let (cx0, cx1) = cell_span(bbox.x0, bbox.x1, canonical.1, f.width);
    let (cy0, cy1) = cell_span(bbox.y0, bbox.y1, canonical.0, f.height);
    let mut out = FeatureMap::zeros(f.layer, f.channels, f.height, f.width);
    for c in 0..f.channels {
        for y in cy0..=cy1 {
            for x in cx0..=cx1 {
                let i = (c * f.height + y) * f.width + x;
                out.data[i] = f.data[i];
            }
        }
    }
    out
}

/// Shape clusters of one object category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseClusterModel {
    pub category: String,
    pub dims: (usize, usize),
    /// `M` centers over vectorized `H_s x W_s` masks, sorted lexicographically.
    pub centers: Vec<Vec<f64>>,
    /// Id of the asset nearest each center.
    pub representatives: Vec<String>,
    /// Style codes (all layers) of each representative.
    pub codes: Vec<Vec<LatentCode>>,
    /// Asset id to center index.
    pub assignments: BTreeMap<String, usize>,
    pub inertia: f64,
    pub iterations: usize,
}

impl PoseClusterModel {
    pub fn cluster_count(&self) -> usize {
        self.centers.len()
    }

    pub fn vectorize(&self, mask: &RegionMask) -> Vec<f64> {
        vectorize_mask(mask, self.dims)
    }

    /// Index of the center nearest `mask`.
    pub fn nearest(&self, mask: &RegionMask) -> usize {
        nearest_center(&self.vectorize(mask), &self.centers).0
    }
}

fn vectorize_mask(mask: &RegionMask, dims: (usize, usize)) -> Vec<f64> {
    area_resample(&mask.values, mask.height, mask.width, dims.0, dims.1)
        .into_iter()
        .map(f64::from)
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(v: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// k-means with k-means++ seeding over downsampled object masks.
pub fn cluster_poses(
    assets: &[&ObjectAsset],
    m: usize,
    dims: (usize, usize),
    seed: u64,
) -> Result<PoseClusterModel> {
    if m < 2 {
        return Err(Error::contract(format!(
            "need at least 2 clusters, got {m}"
        )));
    }
    if assets.len() < m {
        return Err(Error::contract(format!(
            "{} assets cannot form {m} clusters",
            assets.len()
        )));
    }
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::contract("downsample dimensions must be positive"));
    }
    let category = assets[0].category.clone();
    if let Some(a) = assets.iter().find(|a| a.category != category) {
        return Err(Error::contract(format!(
            "mixed categories: `{}` and `{}`",
            category, a.category
        )));
    }
    // Input order must not matter.
    let mut assets: Vec<&ObjectAsset> = assets.to_vec();
    assets.sort_by(|a, b| a.id.cmp(&b.id));
    let data: Vec<Vec<f64>> = assets
        .iter()
        .map(|a| vectorize_mask(&a.mask, dims))
        .collect();
    let mut distinct = data.clone();
    distinct.sort_by(|a, b| lex_cmp(a, b));
    distinct.dedup();
    if distinct.len() < m {
        return Err(Error::contract(format!(
            "only {} distinct mask shapes for {m} clusters",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![data[rng.random_range(0..data.len())].clone()];
    while centers.len() < m {
        let d2: Vec<f64> = data.iter().map(|v| nearest_center(v, &centers).1).collect();
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2
            .iter()
            .rposition(|&d| d > 0.0)
            .expect("distinct points remain");
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(data[pick].clone());
    }

    let dim = data[0].len();
    let mut assign = vec![0usize; data.len()];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=KMEANS_MAX_ITERS {
        iterations = it;
        let mut cur = 0.0;
        for (i, v) in data.iter().enumerate() {
            let (k, d) = nearest_center(v, &centers);
            assign[i] = k;
            cur += d;
        }
        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0usize; m];
        for (v, &k) in data.iter().zip(&assign) {
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(v) {
                *s += x;
            }
        }
        for k in 0..m {
            if counts[k] == 0 {
                // Reseed an empty cluster with the point farthest from its center.
                let far = (0..data.len())
                    .max_by(|&a, &b| {
                        sq_dist(&data[a], &centers[assign[a]])
                            .total_cmp(&sq_dist(&data[b], &centers[assign[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty data");
                centers[k] = data[far].clone();
                assign[far] = k;
            } else {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        let converged = cur == 0.0
            || (inertia.is_finite()
                && (inertia - cur).abs() / inertia.max(f64::MIN_POSITIVE) < KMEANS_REL_TOL);
        inertia = cur;
        if converged {
            break;
        }
    }
    // Final assignment against the final centers.
    inertia = 0.0;
    for (i, v) in data.iter().enumerate() {
        let (k, d) = nearest_center(v, &centers);
        assign[i] = k;
        inertia += d;
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| lex_cmp(&centers[a], &centers[b]));
    let mut rank = vec![0; m];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let centers: Vec<Vec<f64>> = order.iter().map(|&k| centers[k].clone()).collect();
    let mut representatives = Vec::with_capacity(m);
    let mut codes = Vec::with_capacity(m);
    for c in &centers {
        let best = (0..data.len())
            .min_by(|&a, &b| {
                sq_dist(&data[a], c)
                    .total_cmp(&sq_dist(&data[b], c))
                    .then(a.cmp(&b))
            })
            .expect("non-empty data");
        representatives.push(assets[best].id.clone());
        codes.push(assets[best].codes.clone());
    }
    let assignments = assets
        .iter()
        .zip(&assign)
        .map(|(a, &k)| (a.id.clone(), rank[k]))
        .collect();
    Ok(PoseClusterModel {
        category,
        dims,
        centers,
        representatives,
        codes,
        assignments,
        inertia,
        iterations,
    })
}

/// `S + 1` interpolated code sets between two pose centers.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationPath {
    pub steps: usize,
    /// `codes[s]` holds one code per layer.
    pub codes: Vec<Vec<LatentCode>>,
}

impl RotationPath {
    pub fn at(&self, s: usize) -> Result<&[LatentCode]> {
        self.codes
            .get(s)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::contract(format!("step {s} outside 0..={}", self.steps)))
    }
}

/// `w_s = w_l + (s / S)(w_r - w_l)` for `s = 0..=S`, per layer.
pub fn rotation_path(
    left: usize,
    right: usize,
    steps: usize,
    model: &PoseClusterModel,
) -> Result<RotationPath> {
    if steps < 1 {
        return Err(Error::contract("a rotation path needs at least one step"));
    }
    let m = model.cluster_count();
    for r in [left, right] {
        if r >= m {
            return Err(Error::contract(format!(
                "center {r} does not exist (model has {m})"
            )));
        }
    }
    let (wl, wr) = (&model.codes[left], &model.codes[right]);
    let codes = (0..=steps)
        .map(|s| {
            if s == 0 {
                return wl.clone();
            }
            if s == steps {
                return wr.clone();
            }
            let t = s as f64 / steps as f64;
            wl.iter()
                .zip(wr)
                .map(|(a, b)| LatentCode {
                    layer: a.layer,
                    values: a
                        .values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| x + t * (y - x))
                        .collect(),
                })
                .collect()
        })
        .collect();
    Ok(RotationPath { steps, codes })
}

/// A set of assets plus pose cluster models, keyed by id / category.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectBank {
    assets: BTreeMap<String, ObjectAsset>,
    clusters: BTreeMap<String, PoseClusterModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BankManifest {
    version: u32,
    assets: Vec<AssetEntry>,
    #[serde(default)]
    clusters: Vec<PoseClusterModel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetEntry {
    id: String,
    category: String,
    priority: u32,
    bbox: BBox,
    canonical: (usize, usize),
    /// `(layer, channels, height, width)` in blob order.
    layers: Vec<(usize, usize, usize, usize)>,
    features: String,
    features_sha256: String,
    mask: String,
    mask_sha256: String,
    codes: Vec<Vec<f64>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl ObjectBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    /// Adds or replaces an asset.
    pub fn insert(&mut self, asset: ObjectAsset) -> Result<()> {
        check_id(&asset.id)?;
        self.assets.insert(asset.id.clone(), asset);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<ObjectAsset> {
        self.assets.remove(id)
    }

    pub fn get(&self, id: &str) -> Result<&ObjectAsset> {
        self.assets
            .get(id)
            .ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.assets.contains_key(id)
    }

    pub fn assets(&self) -> impl Iterator<Item = &ObjectAsset> {
        self.assets.values()
    }

    pub fn of_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ObjectAsset> {
        self.assets.values().filter(move |a| a.category == category)
    }

    pub fn set_clusters(&mut self, model: PoseClusterModel) {
        self.clusters.insert(model.category.clone(), model);
    }

    pub fn clusters(&self, category: &str) -> Option<&PoseClusterModel> {
        self.clusters.get(category)
    }

    /// Writes blobs and mask PNGs under `dir/assets/`, then swaps in the manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let asset_dir = dir.join("assets");
        fs::create_dir_all(&asset_dir).map_err(|e| Error::io(&asset_dir, e))?;
        let mut entries = Vec::with_capacity(self.assets.len());
        for a in self.assets.values() {
            let blob = a.blob();
            let mask_png = a.mask.to_png()?;
            let features = format!("assets/{}.f32", a.id);
            let mask = format!("assets/{}.mask.png", a.id);
            write_atomic(&dir.join(&features), &blob)?;
            write_atomic(&dir.join(&mask), &mask_png)?;
            entries.push(AssetEntry {
                id: a.id.clone(),
                category: a.category.clone(),
                priority: a.priority,
                bbox: a.bbox,
                canonical: (a.mask.height, a.mask.width),
                layers: a
                    .layers
                    .iter()
                    .map(|(&l, f)| (l, f.channels, f.height, f.width))
                    .collect(),
                features_sha256: sha256_hex(&blob),
                features,
                mask_sha256: sha256_hex(&mask_png),
                mask,
                codes: a.codes.iter().map(|c| c.values.clone()).collect(),
            });
        }
        let manifest = BankManifest {
            version: BANK_VERSION,
            assets: entries,
            clusters: self.clusters.values().cloned().collect(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())?;

        // Drop files of assets no longer in the bank.
        let keep: Vec<String> = manifest
            .assets
            .iter()
            .flat_map(|e| [e.features.clone(), e.mask.clone()])
            .collect();
        if let Ok(rd) = fs::read_dir(&asset_dir) {
            for entry in rd.flatten() {
                let rel = format!("assets/{}", entry.file_name().to_string_lossy());
                if !keep.contains(&rel) {
                    let _ = fs::remove_file(entry.path());
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let probe: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad bank manifest: {e}")))?;
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != BANK_VERSION {
            return Err(Error::Version(version));
        }
        let manifest: BankManifest = serde_json::from_value(probe)
            .map_err(|e| Error::Config(format!("bad bank manifest: {e}")))?;
        let mut bank = ObjectBank::new();
        for e in manifest.assets {
            let corrupt = |reason: String| Error::Corruption {
                asset: e.id.clone(),
                reason,
            };
            check_id(&e.id)?;
            let blob = fs::read(dir.join(&e.features)).map_err(|err| corrupt(err.to_string()))?;
            if sha256_hex(&blob) != e.features_sha256 {
                return Err(corrupt("feature blob digest mismatch".into()));
            }
            let mask_png = fs::read(dir.join(&e.mask)).map_err(|err| corrupt(err.to_string()))?;
            if sha256_hex(&mask_png) != e.mask_sha256 {
                return Err(corrupt("mask digest mismatch".into()));
            }
            let mask = RegionMask::from_png(&mask_png)?;
            if (mask.height, mask.width) != e.canonical {
                return Err(corrupt("mask resolution disagrees with manifest".into()));
            }
            let floats: Vec<f32> = blob
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let mut offset = 0;
            let mut layers = BTreeMap::new();
            for &(l, c, h, w) in &e.layers {
                let n = c * h * w;
                let Some(chunk) = floats.get(offset..offset + n) else {
                    return Err(corrupt("feature blob shorter than declared layers".into()));
                };
                layers.insert(l, FeatureMap::from_vec(l, c, h, w, chunk.to_vec())?);
                offset += n;
            }
            if offset * 4 != blob.len() {
                return Err(corrupt("feature blob longer than declared layers".into()));
            }
            let codes = e
                .codes
                .into_iter()
                .enumerate()
                .map(|(i, v)| LatentCode::new(i + 1, v))
                .collect::<Result<Vec<_>>>()?;
            bank.insert(ObjectAsset {
                id: e.id.clone(),
                category: e.category,
                priority: e.priority,
                bbox: e.bbox,
                mask,
                codes,
                layers,
            })?;
        }
        for c in manifest.clusters {
            bank.set_clusters(c);
        }
        Ok(bank)
    }
}
