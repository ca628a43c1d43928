//! Region masks, priority resolution, and per-layer resampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorModel;
use crate::image::{decode_png8, encode_png};

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn center(&self) -> (i64, i64) {
        (
            (self.x0 + self.x1) as i64 / 2,
            (self.y0 + self.y1) as i64 / 2,
        )
    }
}

/// A mask at canonical resolution, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

fn check_unit_interval(values: &[f32]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        None => Ok(()),
        Some(v) => Err(Error::contract(format!("mask value {v} outside [0,1]"))),
    }
}

impl RegionMask {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::contract(format!(
                "mask has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        check_unit_interval(&values)?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![1.0; height * width],
        }
    }

    /// Binary rectangle covering `x0..x1`, `y0..y1` (exclusive ends, clipped to the frame).
    pub fn rect(height: usize, width: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut m = Self::zeros(height, width);
        for y in y0..y1.min(height) {
            for x in x0..x1.min(width) {
                m.values[y * width + x] = 1.0;
            }
        }
        m
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Bounding box of the non-zero support.
    pub fn bbox(&self) -> Option<BBox> {
        let mut b: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.values[y * self.width + x] > 0.0 {
                    b = Some(match b {
                        None => BBox {
                            x0: x,
                            y0: y,
                            x1: x,
                            y1: y,
                        },
                        Some(b) => BBox {
                            x0: b.x0.min(x),
                            y0: b.y0.min(y),
                            x1: b.x1.max(x),
                            y1: b.y1.max(y),
                        },
                    });
                }
            }
        }
        b
    }

    /// Rounds values to the 8-bit grid used by PNG storage.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .map(|&v| byte_to_unit(unit_to_byte(v)))
                .collect(),
        }
    }

    /// Shifts by whole pixels, zero-filling vacated pixels and dropping what leaves the frame.
    pub fn translate(&self, dx: i64, dy: i64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: translate_plane(&self.values, self.height, self.width, dx, dy),
        }
    }

    pub fn union(&self, other: &RegionMask) -> Result<Self> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::contract("mask union of different resolutions"));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.max(*b))
                .collect(),
        })
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self.values.iter().map(|&v| unit_to_byte(v)).collect();
        encode_png(
            self.width,
            self.height,
            png::ColorType::Grayscale,
            &bytes,
            None,
        )
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let r = decode_png8(bytes)?;
        Ok(Self {
            height: r.height,
            width: r.width,
            values: r.values.into_iter().map(byte_to_unit).collect(),
        })
    }
}

fn unit_to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn byte_to_unit(b: u8) -> f32 {
    b as f32 / 255.0
}

pub(crate) fn translate_plane(src: &[f32], h: usize, w: usize, dx: i64, dy: i64) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        let sy = y - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w as i64 {
            let sx = x - dx;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            out[(y as usize) * w + x as usize] = src[sy as usize * w + sx as usize];
        }
    }
    out
}

/// A mask at one layer's feature resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMask {
    pub layer: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl LayerMask {
    pub fn new(layer: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::contract("layer mask length does not match HxW"));
        }
        check_unit_interval(&values)?;
        Ok(Self {
            layer,
            height,
            width,
            values,
        })
    }

    pub fn filled(layer: usize, height: usize, width: usize, v: f32) -> Self {
        Self {
            layer,
            height,
            width,
            values: vec![v; height * width],
        }
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Nearest-neighbour upsampling back to canonical resolution.
    pub fn upsample_nearest(&self, height: usize, width: usize) -> RegionMask {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                values.push(self.values[sy * self.width + sx]);
            }
        }
        RegionMask {
            height,
            width,
            values,
        }
    }
}

/// Object id and its priority `p`; larger values win contested pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityAssignment {
    pub object: String,
    pub priority: u32,
}

impl PriorityAssignment {
    pub fn new(object: impl Into<String>, priority: u32) -> Self {
        Self {
            object: object.into(),
            priority,
        }
    }
}

/// Default decoration order: later furniture is painted over earlier furniture.
pub const DEFAULT_PRIORITIES: &[(&str, u32)] = &[
    ("background", 0),
    ("bed", 1),
    ("window", 2),
    ("picture", 3),
    ("table", 4),
    ("lamp", 5),
];

pub fn default_priority(category: &str) -> Option<u32> {
    DEFAULT_PRIORITIES
        .iter()
        .find(|(c, _)| *c == category)
        .map(|(_, p)| *p)
}

pub fn assign_priority(category: &str, override_priority: Option<u32>) -> Result<u32> {
    match override_priority {
        Some(p) => Ok(p),
        None => default_priority(category).ok_or_else(|| {
            Error::Config(format!(
                "no default priority for category `{category}`; supply one explicitly"
            ))
        }),
    }
}

/// Resolves raw masks into effective masks:
/// `m_o * max(0, 1 - sum_{o' != o, p' > p} m_o')`, in input order.
pub fn resolve_priority_masks(raw: &[(RegionMask, PriorityAssignment)]) -> Result<Vec<RegionMask>> {
    let Some((first, _)) = raw.first() else {
        return Err(Error::contract(
            "priority resolution needs at least one mask",
        ));
    };
    for (m, a) in raw {
        if (m.height, m.width) != (first.height, first.width) {
            return Err(Error::contract(format!(
                "mask of `{}` is {}x{}, expected {}x{}",
                a.object, m.height, m.width, first.height, first.width
            )));
        }
        check_unit_interval(&m.values)?;
    }
    let planes: Vec<&[f32]> = raw.iter().map(|(m, _)| m.values.as_slice()).collect();
    let priorities: Vec<u32> = raw.iter().map(|(_, a)| a.priority).collect();
    warn_equal_priority_overlaps(raw.iter().map(|(m, a)| (m.values.as_slice(), a)));
    Ok(resolve_planes(&planes, &priorities)
        .into_iter()
        .map(|values| RegionMask {
            height: first.height,
            width: first.width,
            values,
        })
        .collect())
}

pub(crate) fn warn_equal_priority_overlaps<'a>(
    masks: impl Iterator<Item = (&'a [f32], &'a PriorityAssignment)>,
) {
    let masks: Vec<_> = masks.collect();
    for (i, (a, pa)) in masks.iter().enumerate() {
        for (b, pb) in &masks[i + 1..] {
            if pa.priority == pb.priority
                && a.iter().zip(b.iter()).any(|(x, y)| *x > 0.0 && *y > 0.0)
            {
                log::warn!(
                    "`{}` and `{}` share priority {} and overlap; their masks add",
                    pa.object,
                    pb.object,
                    pa.priority
                );
            }
        }
    }
}

/// Priority resolution over equally sized planes. Sums run in input order.
pub(crate) fn resolve_planes(planes: &[&[f32]], priorities: &[u32]) -> Vec<Vec<f32>> {
    let n = planes.first().map_or(0, |p| p.len());
    planes
        .iter()
        .enumerate()
        .map(|(o, plane)| {
            let higher: Vec<usize> = (0..planes.len())
                .filter(|&q| q != o && priorities[q] > priorities[o])
                .collect();
            if higher.is_empty() {
                return plane.to_vec();
            }
            (0..n)
                .map(|i| {
                    let m = plane[i];
                    if m == 0.0 {
                        return 0.0;
                    }
                    let covered: f64 = higher.iter().map(|&q| planes[q][i] as f64).sum();
                    let keep = (1.0 - covered).max(0.0);
                    (m as f64 * keep) as f32
                })
                .collect()
        })
        .collect()
}

/// Box-filter weights mapping `n` input cells onto `m` output cells.
/// Each row lists `(input index, weight)` with weights summing to 1.
fn area_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = n as f64 / m as f64;
    (0..m)
        .map(|i| {
            let lo = i as f64 * ratio;
            let hi = (i + 1) as f64 * ratio;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|j| {
                    let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                    (overlap > 0.0).then(|| (j, overlap / ratio))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling of a row-major plane.
pub(crate) fn area_resample(src: &[f32], h: usize, w: usize, h2: usize, w2: usize) -> Vec<f32> {
    if (h, w) == (h2, w2) {
        return src.to_vec();
    }
    let wy = area_weights(h, h2);
    let wx = area_weights(w, w2);
    // Rows first, then columns.
    let mut rows = vec![0.0f64; h2 * w];
    for (i, ws) in wy.iter().enumerate() {
        for &(j, a) in ws {
            for x in 0..w {
                rows[i * w + x] += a * src[j * w + x] as f64;
            }
        }
    }
    let mut out = Vec::with_capacity(h2 * w2);
    for i in 0..h2 {
        for ws in &wx {
            let v: f64 = ws.iter().map(|&(j, a)| a * rows[i * w + j]).sum();
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Downsamples a canonical mask to `layer`'s feature resolution by area averaging.
pub fn resample_mask(m: &RegionMask, layer: usize, model: &GeneratorModel) -> Result<LayerMask> {
    let (ch, cw) = model.canonical_resolution();
    if (m.height, m.width) != (ch, cw) {
        return Err(Error::contract(format!(
            "mask is {}x{}, canonical resolution is {ch}x{cw}",
            m.height, m.width
        )));
    }
    let (h, w) = model.resolution(layer)?;
    Ok(LayerMask {
        layer,
        height: h,
        width: w,
        values: area_resample(&m.values, m.height, m.width, h, w),
    })
}
