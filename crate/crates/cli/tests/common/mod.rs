#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use logan_core::layout::Palette;
use logan_core::{GeneratorModel, ObjectBank, RegionMask, SegmentationMap, Session, ToyConfig};

pub const MODEL: &str = "toy:7";
pub const SIZE: usize = 256;
/// Layers stored for the fixture assets.
pub const LAYERS: [usize; 6] = [4, 6, 7, 8, 10, 13];

pub fn toy() -> Arc<GeneratorModel> {
    Arc::new(GeneratorModel::toy(&ToyConfig::with_seed(7)).unwrap())
}

/// Covers layer-4 cells `[cx0, cx1) x [cy0, cy1)` (32 px each on the toy model).
pub fn block(cx0: usize, cy0: usize, cx1: usize, cy1: usize) -> RegionMask {
    RegionMask::rect(SIZE, SIZE, cx0 * 32, cy0 * 32, cx1 * 32, cy1 * 32)
}

/// `bed_1` and `lamp_1`, lifted from the seed-3 scene.
pub fn fixture_bank() -> ObjectBank {
    let session = Session::from_seed(toy(), Arc::new(ObjectBank::new()), 3).unwrap();
    let mut bank = ObjectBank::new();
    for (id, cat, mask) in [
        ("bed_1", "bed", block(1, 4, 4, 7)),
        ("lamp_1", "lamp", block(6, 1, 7, 4)),
    ] {
        bank.insert(
            session
                .extract_object(id, &mask, cat, &LAYERS, None)
                .unwrap(),
        )
        .unwrap();
    }
    bank
}

pub fn write_bank(dir: &Path, bank: &ObjectBank) -> PathBuf {
    let path = dir.join("bank");
    bank.save(&path).unwrap();
    path
}

/// A bank whose `bed_1` features at layer 7 hold a NaN inside its footprint.
pub fn broken_bank(dir: &Path) -> PathBuf {
    let mut bank = fixture_bank();
    let mut asset = bank.remove("bed_1").unwrap();
    // Layer 7 is 32x32, so canonical pixel (64, 160) is cell (8, 20).
    asset.layers.get_mut(&7).unwrap().data[20 * 32 + 8] = f32::NAN;
    bank.insert(asset).unwrap();
    let path = dir.join("broken_bank");
    bank.save(&path).unwrap();
    path
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// A bedroom-like map: triangular ceiling, floor band, one bed.
pub fn room_segmentation() -> SegmentationMap {
    let mut labels = vec![1u8; SIZE * SIZE];
    for y in 0..SIZE {
        for x in 0..SIZE {
            let ceiling = (y as f64) <= 60.0 - (x as f64 - 128.0).abs() * 0.4;
            labels[y * SIZE + x] = if ceiling {
                0
            } else if y >= 190 {
                2
            } else {
                1
            };
        }
    }
    let bed = block(1, 4, 4, 7);
    for (l, m) in labels.iter_mut().zip(&bed.values) {
        if *m > 0.0 {
            *l = 3;
        }
    }
    let mut palette = Palette::background();
    palette.0.insert(3, "bed".into());
    SegmentationMap::new(SIZE, SIZE, labels, palette).unwrap()
}

pub fn logan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logan"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("logan binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
