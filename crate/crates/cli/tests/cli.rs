mod common;

use std::fs;

use common::*;
use logan_core::{EditScript, RegionMask, Session};
use tempfile::tempdir;

fn png_size(bytes: &[u8]) -> (u32, u32) {
    assert_eq!(&bytes[1..4], b"PNG");
    let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
    (w, h)
}

#[test]
fn run_matches_library_session() {
    let dir = tempdir().unwrap();
    let bank = fixture_bank();
    let bank_dir = write_bank(dir.path(), &bank);
    let text = r#"{"base":{"seed":5},"edits":[{"op":"remove","object":"bed_1"},{"op":"insert","object":"lamp_1","position":[60,90]}]}"#;
    let script = write(dir.path(), "s.json", text);
    let out = dir.path().join("out.png");
    let r = logan(&[
        "run",
        p(&script),
        "--model",
        MODEL,
        "--bank",
        p(&bank_dir),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));

    let parsed = EditScript::from_json(text.as_bytes()).unwrap();
    let session = Session::new(toy(), std::sync::Arc::new(bank), None, &parsed).unwrap();
    assert_eq!(fs::read(&out).unwrap(), session.image().to_png().unwrap());
}

#[test]
fn seed_flag_replaces_base() {
    let dir = tempdir().unwrap();
    let script = write(dir.path(), "s.json", r#"{"base":{"seed":1},"edits":[]}"#);
    let out = dir.path().join("a.png");
    let r = logan(&["run", p(&script), "--out", p(&out), "--seed", "9"]);
    assert_eq!(code(&r), 0);
    let synth = dir.path().join("b.png");
    assert_eq!(
        code(&logan(&["synthesize", "--seed", "9", "--out", p(&synth)])),
        0
    );
    assert_eq!(fs::read(&out).unwrap(), fs::read(&synth).unwrap());
    let model = toy();
    let direct = model.synthesize(&model.sample_codes(9)).unwrap();
    assert_eq!(fs::read(&synth).unwrap(), direct.to_png().unwrap());
}

#[test]
fn dump_layers_writes_one_image_per_layer() {
    let dir = tempdir().unwrap();
    let bank_dir = write_bank(dir.path(), &fixture_bank());
    let script = write(
        dir.path(),
        "s.json",
        r#"{"base":{"seed":3},"edits":[{"op":"remove","object":"bed_1"}]}"#,
    );
    let out = dir.path().join("renders/sweep.png");
    let r = logan(&[
        "run",
        p(&script),
        "--bank",
        p(&bank_dir),
        "--out",
        p(&out),
        "--dump-layers",
        "4,6,8,10",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let mut images = Vec::new();
    for l in [4, 6, 8, 10] {
        let path = dir.path().join(format!("renders/sweep.layer{l}.png"));
        let bytes = fs::read(&path).unwrap();
        assert_eq!(png_size(&bytes), (256, 256));
        images.push(bytes);
    }
    assert_eq!(
        fs::read(&out).unwrap(),
        images[0],
        "default removal layer is 4"
    );
    images.dedup();
    assert_eq!(images.len(), 4);
    let listed = String::from_utf8(r.stdout).unwrap();
    assert_eq!(listed.lines().count(), 5);
}

#[test]
fn parse_failures_exit_2() {
    let dir = tempdir().unwrap();
    let bank_dir = write_bank(dir.path(), &fixture_bank());
    let cases = [
        (
            "teleport",
            r#"{"base":{"seed":1},"edits":[{"op":"teleport"}]}"#,
            "/edits/0/op",
        ),
        ("syntax", r#"{"base":{"seed":1},"edits":["#, ""),
        (
            "unknown",
            r#"{"base":{"seed":1},"edits":[{"op":"insert","object":"sofa_9"}]}"#,
            "sofa_9",
        ),
        (
            "field",
            r#"{"base":{"seed":1},"extra":1,"edits":[]}"#,
            "extra",
        ),
        (
            "missing",
            r#"{"base":{"seed":1},"edits":[{"op":"shift","object":"bed_1"}]}"#,
            "/edits/0/position",
        ),
        (
            "layer",
            r#"{"base":{"seed":1},"edits":[{"op":"insert","object":"bed_1","layer":12}]}"#,
            "/edits/0/layer",
        ),
        (
            "clear",
            r#"{"base":{"seed":1},"edits":[{"op":"clear_room"}]}"#,
            "/base/segmentation",
        ),
        (
            "segfile",
            r#"{"base":{"seed":1,"segmentation":"nope.png"},"edits":[]}"#,
            "/base/segmentation",
        ),
    ];
    for (name, text, needle) in cases {
        let script = write(dir.path(), &format!("{name}.json"), text);
        let out = dir.path().join(format!("{name}.png"));
        let r = logan(&["run", p(&script), "--bank", p(&bank_dir), "--out", p(&out)]);
        let err = String::from_utf8_lossy(&r.stderr);
        assert_eq!(code(&r), 2, "{name}: {err}");
        assert!(err.contains(needle), "{name}: {err}");
        assert!(!out.exists(), "{name}");
    }
    let r = logan(&["run", p(&dir.path().join("absent.json")), "--out", "x.png"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn execution_failure_exits_3() {
    let dir = tempdir().unwrap();
    let bank_dir = broken_bank(dir.path());
    let script = write(
        dir.path(),
        "s.json",
        r#"{"base":{"seed":1},"edits":[{"op":"insert","object":"bed_1"}]}"#,
    );
    let r = logan(&[
        "run",
        p(&script),
        "--bank",
        p(&bank_dir),
        "--out",
        p(&dir.path().join("o.png")),
    ]);
    let err = String::from_utf8_lossy(&r.stderr);
    assert_eq!(code(&r), 3, "{err}");
    assert!(err.contains("layer 7") && err.contains("bed_1"), "{err}");
}

#[test]
fn setup_failures_exit_1() {
    let dir = tempdir().unwrap();
    let script = write(dir.path(), "s.json", r#"{"base":{"seed":1},"edits":[]}"#);
    let out = dir.path().join("o.png");
    let r = logan(&["run", p(&script), "--model", "toy:x", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    let r = logan(&[
        "run",
        p(&script),
        "--model",
        p(&dir.path().join("none.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&r), 1);
}

#[test]
fn segmentation_resolves_next_to_script() {
    let dir = tempdir().unwrap();
    let sub = dir.path().join("scene");
    fs::create_dir(&sub).unwrap();
    room_segmentation().save(&sub.join("room.png")).unwrap();
    let script = write(
        &sub,
        "s.json",
        r#"{"base":{"seed":3,"segmentation":"room.png"},"edits":[{"op":"clear_room"}]}"#,
    );
    let out = dir.path().join("cleared.png");
    let r = logan(&["run", p(&script), "--out", p(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let plain = dir.path().join("plain.png");
    logan(&["synthesize", "--seed", "3", "--out", p(&plain)]);
    assert_ne!(fs::read(&out).unwrap(), fs::read(&plain).unwrap());
}

#[test]
fn bank_commands() {
    let dir = tempdir().unwrap();
    let bank = dir.path().join("bank");
    let mut paths = Vec::new();
    for (i, (x0, w)) in [(10, 90), (20, 100), (140, 30), (150, 34)]
        .into_iter()
        .enumerate()
    {
        let m = RegionMask::rect(256, 256, x0, 60, x0 + w, 200);
        let path = dir.path().join(format!("m{i}.png"));
        fs::write(&path, m.to_png().unwrap()).unwrap();
        paths.push(path);
    }
    for (i, path) in paths.iter().enumerate() {
        let id = format!("bed_{i}");
        let r = logan(&[
            "bank",
            "extract",
            "--bank",
            p(&bank),
            "--seed",
            "2",
            "--mask",
            p(path),
            "--id",
            &id,
            "--category",
            "bed",
            "--layers",
            "4,7",
        ]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let r = logan(&["bank", "list", "--bank", p(&bank)]);
    let listing = String::from_utf8(r.stdout).unwrap();
    assert_eq!(listing.lines().count(), 4);
    assert!(listing.starts_with("bed_0\tbed\t"));
    assert!(listing.contains("layers=4,7"));

    let r = logan(&[
        "bank",
        "cluster",
        "--bank",
        p(&bank),
        "--category",
        "bed",
        "-m",
        "2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let loaded = logan_core::ObjectBank::load(&bank).unwrap();
    let clusters = loaded.clusters("bed").unwrap();
    assert_eq!(clusters.assignments["bed_0"], clusters.assignments["bed_1"]);
    assert_eq!(clusters.assignments["bed_2"], clusters.assignments["bed_3"]);
    assert_ne!(clusters.assignments["bed_0"], clusters.assignments["bed_2"]);

    let r = logan(&["bank", "cluster", "--bank", p(&bank), "--category", "sofa"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn figures_write_sweep_grids() {
    let dir = tempdir().unwrap();
    let r = logan(&["figures", p(dir.path())]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for name in ["removal_sweep.png", "insertion_sweep.png"] {
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(png_size(&bytes), (5 * 256, 256), "{name}");
    }
}
