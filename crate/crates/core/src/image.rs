//! Rendered images and PNG codecs for images, masks, and label maps.

use std::io::Cursor;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::FeatureMap;

/// A planar RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `3 x H x W`.
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::contract("rgb data length does not match 3xHxW"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &RgbImage) -> f32 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "image sizes differ"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Hex SHA-256 of the raw float bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Interleaved 8-bit RGB, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for k in 0..3 {
                out.push(to_u8(self.data[k * n + i]));
            }
        }
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(
            self.width,
            self.height,
            png::ColorType::Rgb,
            &self.to_rgb8(),
            None,
        )
    }

    /// Images side by side, top-aligned, on a black canvas.
    pub fn hconcat(images: &[RgbImage]) -> Result<RgbImage> {
        let width: usize = images.iter().map(|i| i.width).sum();
        let height = images.iter().map(|i| i.height).max().unwrap_or(0);
        let n = width * height;
        let mut data = vec![0.0; 3 * n];
        let mut x0 = 0;
        for img in images {
            let m = img.width * img.height;
            for k in 0..3 {
                for y in 0..img.height {
                    for x in 0..img.width {
                        data[k * n + y * width + x0 + x] = img.data[k * m + y * img.width + x];
                    }
                }
            }
            x0 += img.width;
        }
        RgbImage::from_planar(width, height, data)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
    palette: Option<Vec<u8>>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Codec(e.to_string()))?;
        writer
            .write_image_data(bytes)
            .map_err(|e| Error::Codec(e.to_string()))?;
    }
    Ok(out)
}

/// Decoded 8-bit single-channel raster (gray or palette indices).
pub(crate) struct Raster8 {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

/// Decodes an 8-bit grayscale or indexed PNG without expanding palettes.
pub(crate) fn decode_png8(bytes: &[u8]) -> Result<Raster8> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| Error::Codec(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Codec("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Codec(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Codec(format!(
            "expected 8-bit png, got {:?}",
            info.bit_depth
        )));
    }
    match info.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => {}
        other => {
            return Err(Error::Codec(format!(
                "expected single-channel png, got {other:?}"
            )))
        }
    }
    let (width, height) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    // Rows may be padded to line_size; repack to width bytes.
    let line = info.line_size;
    let values = if line == width {
        buf
    } else {
        buf.chunks(line)
            .take(height)
            .flat_map(|r| r[..width].iter().copied())
            .collect()
    };
    Ok(Raster8 {
        width,
        height,
        values,
    })
}

/// Grayscale heatmap of the per-pixel channel mean, min-max normalized.
pub fn feature_heatmap_png(f: &FeatureMap) -> Result<Vec<u8>> {
    let n = f.plane_len();
    let mut mean = vec![0.0f64; n];
    for c in 0..f.channels {
        for (m, v) in mean.iter_mut().zip(f.channel(c)) {
            *m += *v as f64;
        }
    }
    let (lo, hi) = mean
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes: Vec<u8> = mean
        .iter()
        .map(|v| (((v - lo) / span) * 255.0).round() as u8)
        .collect();
    encode_png(f.width, f.height, png::ColorType::Grayscale, &bytes, None)
}
