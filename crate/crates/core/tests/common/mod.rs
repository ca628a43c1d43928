#![allow(dead_code)]

use std::sync::Arc;

use logan_core::layout::Palette;
use logan_core::{GeneratorModel, ObjectBank, RegionMask, SegmentationMap, Session, ToyConfig};

pub const SIZE: usize = 256;
/// Canonical pixels per layer-4 cell on the toy model.
pub const BLOCK: usize = 32;

pub fn toy(seed: u64) -> Arc<GeneratorModel> {
    Arc::new(GeneratorModel::toy(&ToyConfig::with_seed(seed)).unwrap())
}

/// Mask covering layer-4 cells `[cx0, cx1) x [cy0, cy1)`, binary at every layer.
pub fn block_mask(cx0: usize, cy0: usize, cx1: usize, cy1: usize) -> RegionMask {
    RegionMask::rect(
        SIZE,
        SIZE,
        cx0 * BLOCK,
        cy0 * BLOCK,
        cx1 * BLOCK,
        cy1 * BLOCK,
    )
}

/// Ellipse-shaped soft-edged mask, not aligned to any cell grid.
pub fn blob(cx: f64, cy: f64, rx: f64, ry: f64) -> RegionMask {
    let mut values = vec![0.0f32; SIZE * SIZE];
    for y in 0..SIZE {
        for x in 0..SIZE {
            let d = ((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2);
            if d <= 1.0 {
                values[y * SIZE + x] = 1.0;
            }
        }
    }
    RegionMask::new(SIZE, SIZE, values).unwrap()
}

/// Extracts `(id, category, mask)` objects from the seed-`scene` render of `model`.
pub fn bank_from_scene(
    model: &Arc<GeneratorModel>,
    scene: u64,
    objects: &[(&str, &str, RegionMask)],
    layers: &[usize],
) -> ObjectBank {
    let session = Session::from_seed(model.clone(), Arc::new(ObjectBank::new()), scene).unwrap();
    let mut bank = ObjectBank::new();
    for (id, category, mask) in objects {
        bank.insert(
            session
                .extract_object(id, mask, category, layers, None)
                .unwrap(),
        )
        .unwrap();
    }
    bank
}

pub fn palette() -> Palette {
    let mut p = Palette::background();
    p.0.insert(3, "bed".into());
    p.0.insert(4, "lamp".into());
    p
}

/// Triangle ceiling `(0,0)-(w-1,0)-apex`, floor below the line from
/// `(0, y_l)` to `(w-1, y_r)`, wall elsewhere.
pub fn room(w: usize, h: usize, apex: (f64, f64), y_l: f64, y_r: f64) -> SegmentationMap {
    let mut labels = vec![1u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let left_edge = apex.1 * xf / apex.0;
            let right_edge = apex.1 * ((w - 1) as f64 - xf) / ((w - 1) as f64 - apex.0);
            let floor_line = y_l + (y_r - y_l) * xf / (w - 1) as f64;
            labels[y * w + x] = if yf <= left_edge.min(right_edge) + 1e-9 {
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

/// Paints `label` into `seg` wherever `mask` is set.
pub fn paint(seg: &mut SegmentationMap, mask: &RegionMask, label: u8) {
    for (l, m) in seg.labels.iter_mut().zip(&mask.values) {
        if *m > 0.0 {
            *l = label;
        }
    }
}
