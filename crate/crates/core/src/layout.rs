//! Room layout parsing from segmentation maps, and background fills.
//!
//! A layout has three parts: the convex hull of the ceiling pixels, the key
//! point at the bottom of that hull, and a floor boundary made of two sloped
//! segments anchored on the left and right image borders. Pixels on or above
//! the hull's lower envelope are ceiling, pixels on or below the floor
//! boundary are floor, and everything else is wall.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::FeatureMap;
use crate::image::{decode_png8, encode_png};
use crate::mask::{area_resample, LayerMask, RegionMask};

pub const CEILING: &str = "ceiling";
pub const WALL: &str = "wall";
pub const FLOOR: &str = "floor";

/// Background classes in the order used by rasterized layouts (label = index).
pub const BACKGROUND_CLASSES: [&str; 3] = [CEILING, WALL, FLOOR];

/// Label index to class name. Serialized as a flat JSON object: `{"0": "ceiling", ...}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Palette(pub BTreeMap<u8, String>);

impl Palette {
    pub fn background() -> Self {
        Palette(
            BACKGROUND_CLASSES
                .iter()
                .enumerate()
                .map(|(i, c)| (i as u8, c.to_string()))
                .collect(),
        )
    }

    pub fn id_of(&self, class: &str) -> Option<u8> {
        self.0
            .iter()
            .find(|(_, c)| c.as_str() == class)
            .map(|(i, _)| *i)
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.0.get(&id).map(String::as_str)
    }

    fn is_background(&self, id: u8) -> bool {
        self.name(id)
            .is_some_and(|n| BACKGROUND_CLASSES.contains(&n))
    }

    /// Deterministic display colours for an indexed PNG.
    fn rgb_table(&self) -> Vec<u8> {
        let max = self.0.keys().max().copied().unwrap_or(0) as usize;
        (0..=max)
            .flat_map(|i| {
                let h = (i as u32).wrapping_mul(2_654_435_761);
                [(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub palette: Palette,
}

impl SegmentationMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>, palette: Palette) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::contract(format!(
                "segmentation has {} labels, expected {height}x{width}",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| !palette.0.contains_key(l)) {
            return Err(Error::contract(format!("label {l} missing from palette")));
        }
        Ok(Self {
            height,
            width,
            labels,
            palette,
        })
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn class_at(&self, x: usize, y: usize) -> &str {
        self.palette.name(self.at(x, y)).unwrap_or("")
    }

    /// Union of all pixels whose class is not ceiling, wall, or floor.
    pub fn object_mask(&self) -> RegionMask {
        RegionMask {
            height: self.height,
            width: self.width,
            values: self
                .labels
                .iter()
                .map(|&l| {
                    if self.palette.is_background(l) {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect(),
        }
    }

    pub fn class_mask(&self, class: &str) -> RegionMask {
        let id = self.palette.id_of(class);
        RegionMask {
            height: self.height,
            width: self.width,
            values: self
                .labels
                .iter()
                .map(|&l| if Some(l) == id { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(
            self.width,
            self.height,
            png::ColorType::Indexed,
            &self.labels,
            Some(self.palette.rgb_table()),
        )
    }

    pub fn from_png(bytes: &[u8], palette: Palette) -> Result<Self> {
        let r = decode_png8(bytes)?;
        Self::new(r.height, r.width, r.values, palette)
    }

    /// Sidecar palette path for a segmentation PNG: same stem, `.json` extension.
    pub fn palette_path(png_path: &Path) -> PathBuf {
        png_path.with_extension("json")
    }

    pub fn load(png_path: &Path) -> Result<Self> {
        let bytes = fs::read(png_path).map_err(|e| Error::io(png_path, e))?;
        let pal_path = Self::palette_path(png_path);
        let pal_text = fs::read_to_string(&pal_path).map_err(|e| Error::io(&pal_path, e))?;
        let palette: Palette = serde_json::from_str(&pal_text)
            .map_err(|e| Error::Config(format!("bad palette {}: {e}", pal_path.display())))?;
        Self::from_png(&bytes, palette)
    }

    pub fn save(&self, png_path: &Path) -> Result<()> {
        fs::write(png_path, self.to_png()?).map_err(|e| Error::io(png_path, e))?;
        let pal_path = Self::palette_path(png_path);
        let text = serde_json::to_string_pretty(&self.palette).expect("palette serializes");
        fs::write(&pal_path, text).map_err(|e| Error::io(&pal_path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    /// Counter-clockwise (in image coordinates) hull vertices.
    pub ceiling_hull: Vec<Point>,
    pub key_point: Point,
    pub left_anchor: Point,
    pub right_anchor: Point,
    /// Left anchor, optional interior vertex, right anchor.
    pub floor_boundary: Vec<Point>,
    /// `(k_L, k_R)` as dy/dx.
    pub slopes: (f64, f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayoutOptions {
    /// Fixed `(k_L, k_R)`; fitted from the visible floor/wall boundary when absent.
    pub slopes: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackgroundClass {
    Ceiling,
    Wall,
    Floor,
}

impl BackgroundClass {
    pub const ALL: [BackgroundClass; 3] = [Self::Ceiling, Self::Wall, Self::Floor];

    pub fn name(self) -> &'static str {
        BACKGROUND_CLASSES[self.index()]
    }

    pub fn index(self) -> usize {
        match self {
            Self::Ceiling => 0,
            Self::Wall => 1,
            Self::Floor => 2,
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; collinear points are dropped.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn fit_slope_through(anchor: Point, pts: &[(f64, f64)]) -> f64 {
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), &(x, y)| {
        let u = x - anchor.x;
        (n + u * (y - anchor.y), d + u * u)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn parse_layout(seg: &SegmentationMap, opts: &LayoutOptions) -> Result<Layout> {
    let (w, h) = (seg.width, seg.height);
    let ceiling = seg.palette.id_of(CEILING);
    let floor = seg.palette.id_of(FLOOR);
    let wall = seg.palette.id_of(WALL);

    // Only the extreme pixels of each column can be hull vertices.
    let mut extremes = Vec::new();
    for x in 0..w {
        let ys: Vec<usize> = (0..h).filter(|&y| Some(seg.at(x, y)) == ceiling).collect();
        if let (Some(&top), Some(&bottom)) = (ys.first(), ys.last()) {
            extremes.push((x as i64, top as i64));
            extremes.push((x as i64, bottom as i64));
        }
    }
    if extremes.is_empty() {
        return Err(Error::LayoutIncomplete {
            component: "ceiling",
        });
    }
    let hull = convex_hull(extremes);
    let center = w as f64 / 2.0;
    let key = hull
        .iter()
        .copied()
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then_with(|| {
                    let da = (a.0 as f64 - center).abs();
                    let db = (b.0 as f64 - center).abs();
                    db.total_cmp(&da)
                })
                .then_with(|| b.0.cmp(&a.0))
        })
        .expect("non-empty hull");

    let topmost_floor = |x: usize| (0..h).find(|&y| Some(seg.at(x, y)) == floor);
    let y_l = topmost_floor(0).ok_or(Error::LayoutIncomplete {
        component: "floor (left border)",
    })?;
    let y_r = topmost_floor(w - 1).ok_or(Error::LayoutIncomplete {
        component: "floor (right border)",
    })?;
    let left_anchor = Point::new(0.0, y_l as f64);
    let right_anchor = Point::new((w - 1) as f64, y_r as f64);

    let slopes = match opts.slopes {
        Some(s) => s,
        None => {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for x in 0..w {
                for y in 1..h {
                    if Some(seg.at(x, y)) == floor && Some(seg.at(x, y - 1)) == wall {
                        let p = (x as f64, y as f64);
                        if (x as i64) < key.0 {
                            left.push(p);
                        } else if (x as i64) > key.0 {
                            right.push(p);
                        }
                    }
                }
            }
            (
                fit_slope_through(left_anchor, &left),
                fit_slope_through(right_anchor, &right),
            )
        }
    };
    if !(slopes.0.is_finite() && slopes.1.is_finite()) {
        return Err(Error::Numeric("non-finite floor slope".into()));
    }

    let mut floor_boundary = vec![left_anchor];
    let (k_l, k_r) = slopes;
    if k_l != k_r {
        let x = (right_anchor.y - left_anchor.y - k_r * right_anchor.x) / (k_l - k_r);
        if x > 0.0 && x < right_anchor.x {
            floor_boundary.push(Point::new(x, left_anchor.y + k_l * x));
        }
    }
    floor_boundary.push(right_anchor);

    Ok(Layout {
        width: w,
        height: h,
        ceiling_hull: hull
            .iter()
            .map(|&(x, y)| Point::new(x as f64, y as f64))
            .collect(),
        key_point: Point::new(key.0 as f64, key.1 as f64),
        left_anchor,
        right_anchor,
        floor_boundary,
        slopes,
    })
}

const GEOM_EPS: f64 = 1e-9;

impl Layout {
    /// Lowest hull point on the vertical line at `x`, if the line meets the hull.
    fn ceiling_bottom(&self, x: f64) -> Option<f64> {
        let hull = &self.ceiling_hull;
        if hull.len() == 1 {
            return ((x - hull[0].x).abs() <= GEOM_EPS).then_some(hull[0].y);
        }
        let mut best: Option<f64> = None;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let (lo, hi) = (a.x.min(b.x), a.x.max(b.x));
            if x < lo - GEOM_EPS || x > hi + GEOM_EPS {
                continue;
            }
            let y = if (b.x - a.x).abs() <= GEOM_EPS {
                a.y.max(b.y)
            } else {
                a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
            };
            best = Some(best.map_or(y, |v: f64| v.max(y)));
        }
        best
    }

    /// Height of the floor boundary at `x`.
    pub fn floor_y(&self, x: f64) -> f64 {
        let pts = &self.floor_boundary;
        let seg = pts
            .windows(2)
            .find(|s| x <= s[1].x)
            .unwrap_or(&pts[pts.len() - 2..]);
        let (a, b) = (seg[0], seg[1]);
        if (b.x - a.x).abs() <= GEOM_EPS {
            return a.y.max(b.y);
        }
        a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
    }

    /// Class of a point in this layout's pixel coordinates.
    pub fn classify(&self, x: f64, y: f64) -> BackgroundClass {
        if let Some(bottom) = self.ceiling_bottom(x) {
            if y <= bottom + GEOM_EPS {
                return BackgroundClass::Ceiling;
            }
        }
        if y >= self.floor_y(x) - GEOM_EPS {
            BackgroundClass::Floor
        } else {
            BackgroundClass::Wall
        }
    }
}

/// Rasterizes the three-class partition at `(height, width)`; labels follow
/// [`BACKGROUND_CLASSES`].
pub fn rasterize_layout(layout: &Layout, resolution: (usize, usize)) -> SegmentationMap {
    let (h, w) = resolution;
    let sx = layout.width as f64 / w as f64;
    let sy = layout.height as f64 / h as f64;
    let mut labels = Vec::with_capacity(h * w);
    for y in 0..h {
        let ly = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..w {
            let lx = (x as f64 + 0.5) * sx - 0.5;
            labels.push(layout.classify(lx, ly).index() as u8);
        }
    }
    SegmentationMap {
        height: h,
        width: w,
        labels,
        palette: Palette::background(),
    }
}

/// Background content for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerFill {
    pub features: FeatureMap,
    /// Area fraction of each layout region (ceiling, wall, floor) per cell.
    pub regions: Vec<LayerMask>,
    pub low_confidence: bool,
}

/// Per-layer background fills `F_b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BackgroundFill {
    pub layers: BTreeMap<usize, LayerFill>,
}

impl BackgroundFill {
    pub fn layer(&self, layer: usize) -> Option<&LayerFill> {
        self.layers.get(&layer)
    }

    pub fn low_confidence(&self) -> bool {
        self.layers.values().any(|l| l.low_confidence)
    }
}

/// Weighted per-channel mean over cells; `None` when all weights vanish.
fn weighted_mean(f: &FeatureMap, weights: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(
        (0..f.channels)
            .map(|c| {
                f.channel(c)
                    .iter()
                    .zip(weights)
                    .map(|(v, w)| *v as f64 * w)
                    .sum::<f64>()
                    / total
            })
            .collect(),
    )
}

/// Background fill for one feature map.
///
/// `occlusion` marks extra pixels (at canonical resolution) whose features
/// must not contribute, typically the masks being erased. Cells touched by
/// any occluded or object pixel carry zero weight, so the fill never depends
/// on feature values under objects.
pub fn build_layer_fill(
    f: &FeatureMap,
    scene: Option<(&SegmentationMap, &Layout)>,
    occlusion: Option<&RegionMask>,
    canonical: (usize, usize),
) -> Result<LayerFill> {
    let (ch, cw) = canonical;
    let (h, w) = (f.height, f.width);
    f.ensure_finite()?;
    let mut occluded = match scene {
        Some((seg, _)) => {
            if (seg.height, seg.width) != canonical {
                return Err(Error::contract(format!(
                    "segmentation is {}x{}, canonical resolution is {ch}x{cw}",
                    seg.height, seg.width
                )));
            }
            seg.object_mask()
        }
        None => RegionMask::zeros(ch, cw),
    };
    if let Some(extra) = occlusion {
        occluded = occluded.union(&extra.quantized())?;
        for v in &mut occluded.values {
            if *v > 0.0 {
                *v = 1.0;
            }
        }
    }
    let occ_cells = area_resample(&occluded.values, ch, cw, h, w);
    let clean = |weights: Vec<f32>| -> Vec<f64> {
        weights
            .iter()
            .zip(&occ_cells)
            .map(|(v, o)| if *o == 0.0 { *v as f64 } else { 0.0 })
            .collect()
    };

    let mut low_confidence = false;
    let visible_any: Vec<f32> = occluded.values.iter().map(|o| 1.0 - o).collect();
    let global = weighted_mean(f, &clean(area_resample(&visible_any, ch, cw, h, w)))
        .or_else(|| {
            let loose: Vec<f64> = occ_cells.iter().map(|o| 1.0 - *o as f64).collect();
            weighted_mean(f, &loose)
        })
        .unwrap_or_else(|| vec![0.0; f.channels]);

    let (means, regions): (Vec<Vec<f64>>, Vec<LayerMask>) = match scene {
        None => {
            low_confidence = true;
            (
                vec![global.clone()],
                vec![LayerMask::filled(f.layer, h, w, 1.0)],
            )
        }
        Some((seg, layout)) => {
            let raster = rasterize_layout(layout, canonical);
            BackgroundClass::ALL
                .iter()
                .map(|class| {
                    let region: Vec<f32> = raster
                        .labels
                        .iter()
                        .map(|&l| {
                            if l as usize == class.index() {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let id = seg.palette.id_of(class.name());
                    let visible: Vec<f32> = seg
                        .labels
                        .iter()
                        .zip(&region)
                        .zip(&occluded.values)
                        .map(|((&l, &r), &o)| {
                            if Some(l) == id && r == 1.0 && o == 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let mean = match weighted_mean(f, &clean(area_resample(&visible, ch, cw, h, w)))
                    {
                        Some(m) => m,
                        None => {
                            low_confidence = true;
                            global.clone()
                        }
                    };
                    let frac = area_resample(&region, ch, cw, h, w);
                    (
                        mean,
                        LayerMask::new(f.layer, h, w, frac).expect("fractions in [0,1]"),
                    )
                })
                .unzip()
        }
    };

    let mut out = FeatureMap::zeros(f.layer, f.channels, h, w);
    let n = h * w;
    for i in 0..n {
        let total: f64 = regions.iter().map(|r| r.values[i] as f64).sum();
        for c in 0..f.channels {
            let v: f64 = regions
                .iter()
                .zip(&means)
                .map(|(r, m)| r.values[i] as f64 * m[c])
                .sum();
            out.data[c * n + i] = if total > 0.0 {
                (v / total) as f32
            } else {
                global[c] as f32
            };
        }
    }
    if low_confidence {
        log::warn!("background fill at layer {} is low-confidence", f.layer);
    }
    Ok(LayerFill {
        features: out,
        regions,
        low_confidence,
    })
}

/// Builds fills for every supplied layer's features.
pub fn build_background_fill(
    features: &[FeatureMap],
    seg: &SegmentationMap,
    layout: &Layout,
) -> Result<BackgroundFill> {
    let canonical = (seg.height, seg.width);
    let mut fill = BackgroundFill::default();
    for f in features {
        fill.layers.insert(
            f.layer,
            build_layer_fill(f, Some((seg, layout)), None, canonical)?,
        );
    }
    Ok(fill)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn palette() -> Palette {
        let mut p = Palette::background();
        p.0.insert(3, "bed".into());
        p
    }

    /// Triangle ceiling from the top edge down to `apex`, floor below two lines.
    fn synthetic(w: usize, h: usize, apex: (f64, f64), y_l: f64, y_r: f64) -> SegmentationMap {
        let mut labels = vec![1u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                // Ceiling: within the triangle (0,0)-(w-1,0)-apex.
                let left_edge = apex.1 * xf / apex.0;
                let right_edge = apex.1 * ((w - 1) as f64 - xf) / ((w - 1) as f64 - apex.0);
                let ceiling = yf <= left_edge.min(right_edge) + 1e-9;
                let floor_line = y_l + (y_r - y_l) * xf / (w - 1) as f64;
                labels[y * w + x] = if ceiling {
                    0
                } else if yf >= floor_line - 1e-9 {
                    2
                } else {
                    1
                };
            }
        }
        SegmentationMap::new(h, w, labels, palette()).unwrap()
    }

    #[test]
    fn triangle_ceiling_key_point() {
        let seg = synthetic(256, 256, (128.0, 80.0), 200.0, 210.0);
        let layout = parse_layout(&seg, &LayoutOptions::default()).unwrap();
        assert_eq!(layout.key_point, Point::new(128.0, 80.0));
        assert_eq!(layout.left_anchor, Point::new(0.0, 200.0));
        assert_eq!(layout.right_anchor, Point::new(255.0, 210.0));
        let raster = rasterize_layout(&layout, (256, 256));
        assert!(raster.labels.iter().all(|&l| l < 3));
        let agree = raster
            .labels
            .iter()
            .zip(&seg.labels)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 / (256.0 * 256.0) >= 0.99, "agreement {agree}");
    }

    #[test]
    fn single_ceiling_pixel() {
        let (w, h) = (32, 32);
        let mut labels = vec![1u8; w * h];
        labels[10 * w + 10] = 0;
        for x in 0..w {
            labels[(h - 1) * w + x] = 2;
        }
        let seg = SegmentationMap::new(h, w, labels, palette()).unwrap();
        let layout = parse_layout(&seg, &LayoutOptions::default()).unwrap();
        assert_eq!(layout.ceiling_hull, vec![Point::new(10.0, 10.0)]);
        assert_eq!(layout.key_point, Point::new(10.0, 10.0));
    }

    #[test]
    fn horizontal_boundary() {
        let seg = synthetic(64, 256, (32.0, 40.0), 200.0, 200.0);
        let layout = parse_layout(
            &seg,
            &LayoutOptions {
                slopes: Some((0.0, 0.0)),
            },
        )
        .unwrap();
        let raster = rasterize_layout(&layout, (256, 64));
        for y in 0..256 {
            for x in 0..64 {
                let is_floor = raster.at(x, y) == 2;
                assert_eq!(is_floor, y >= 200, "({x},{y})");
            }
        }
    }

    #[test]
    fn missing_components() {
        let (w, h) = (8, 8);
        let no_ceiling = SegmentationMap::new(h, w, vec![2; 64], palette()).unwrap();
        assert!(matches!(
            parse_layout(&no_ceiling, &LayoutOptions::default()),
            Err(Error::LayoutIncomplete {
                component: "ceiling"
            })
        ));
        let mut labels = vec![1u8; 64];
        labels[0] = 0;
        labels[7 * 8 + 7] = 2;
        let no_left = SegmentationMap::new(h, w, labels, palette()).unwrap();
        assert!(matches!(
            parse_layout(&no_left, &LayoutOptions::default()),
            Err(Error::LayoutIncomplete {
                component: "floor (left border)"
            })
        ));
    }

    #[test]
    fn tiny_raster_is_exhaustive() {
        let seg = synthetic(256, 256, (100.0, 60.0), 180.0, 220.0);
        let layout = parse_layout(&seg, &LayoutOptions::default()).unwrap();
        let r = rasterize_layout(&layout, (4, 4));
        assert_eq!(r.labels.len(), 16);
        assert!(r.labels.iter().all(|&l| l < 3));
        assert_eq!(r, rasterize_layout(&layout, (4, 4)));
    }

    #[test]
    fn constant_features_fill_constant() {
        let seg = synthetic(32, 32, (16.0, 8.0), 24.0, 24.0);
        let layout = parse_layout(&seg, &LayoutOptions::default()).unwrap();
        let f = FeatureMap::filled(5, 3, 16, 16, 5.0);
        let fill = build_layer_fill(&f, Some((&seg, &layout)), None, (32, 32)).unwrap();
        assert!(fill.features.data.iter().all(|&v| v == 5.0));
        assert!(!fill.low_confidence);
    }

    #[test]
    fn per_region_means() {
        // Wall above row 16, floor from row 16, ceiling a single top-left pixel.
        let (w, h) = (32, 32);
        let mut labels = vec![1u8; w * h];
        for y in 16..h {
            for x in 0..w {
                labels[y * w + x] = 2;
            }
        }
        labels[0] = 0;
        let seg = SegmentationMap::new(h, w, labels, palette()).unwrap();
        let layout = parse_layout(&seg, &LayoutOptions::default()).unwrap();
        let mut f = FeatureMap::zeros(1, 1, 32, 32);
        for y in 0..32 {
            for x in 0..32 {
                f.data[y * 32 + x] = if y >= 16 { 3.0 } else { 1.0 };
            }
        }
        let fill = build_layer_fill(&f, Some((&seg, &layout)), None, (32, 32)).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if (x, y) == (0, 0) {
                    continue;
                }
                let expected = if y >= 16 { 3.0 } else { 1.0 };
                assert_eq!(fill.features.at(0, y, x), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn fully_occluded_ceiling_falls_back() {
        let seg0 = synthetic(32, 32, (16.0, 8.0), 24.0, 24.0);
        let layout = parse_layout(&seg0, &LayoutOptions::default()).unwrap();
        // Cover the ceiling with a bed.
        let mut seg = seg0.clone();
        for l in &mut seg.labels {
            if *l == 0 {
                *l = 3;
            }
        }
        let f = FeatureMap::filled(5, 2, 32, 32, 2.0);
        let fill = build_layer_fill(&f, Some((&seg, &layout)), None, (32, 32)).unwrap();
        assert!(fill.low_confidence);
        assert!(fill.features.data.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn palette_json_shape() {
        let text = serde_json::to_string(&palette()).unwrap();
        assert_eq!(text, r#"{"0":"ceiling","1":"wall","2":"floor","3":"bed"}"#);
        let back: Palette = serde_json::from_str(&text).unwrap();
        assert_eq!(back, palette());
    }

    #[test]
    fn indexed_png_roundtrip() {
        let seg = synthetic(20, 12, (10.0, 3.0), 8.0, 9.0);
        let back = SegmentationMap::from_png(&seg.to_png().unwrap(), seg.palette.clone()).unwrap();
        assert_eq!(back, seg);
    }
}
