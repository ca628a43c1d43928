//! Batch operations behind the `logan` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use logan_core::bank::cluster_poses;
use logan_core::composer::Scene;
use logan_core::{
    EditOp, EditScript, GeneratorModel, ModelConfig, ObjectAsset, ObjectBank, OpKind, RegionMask,
    RgbImage, SegmentationMap, Session,
};

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The script could not be read, failed validation, or references
    /// something that does not exist.
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Execution(String),
    /// Model, bank, or output files could not be used.
    #[error("{0}")]
    Setup(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Setup(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Execution(_) => 3,
        }
    }

    fn setup(e: impl std::fmt::Display) -> Self {
        CliError::Setup(e.to_string())
    }

    /// Sorts an error raised while compiling or running a script.
    fn classify(e: logan_core::Error) -> Self {
        if e.is_parse_error() {
            CliError::Parse(e.to_string())
        } else {
            CliError::Execution(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Loads `toy:SEED` or a checkpoint manifest path.
pub fn load_model(spec: &str) -> CliResult<Arc<GeneratorModel>> {
    let config: ModelConfig = spec.parse().map_err(CliError::setup)?;
    GeneratorModel::instantiate(&config)
        .map(Arc::new)
        .map_err(CliError::setup)
}

/// Loads a bank directory; a missing directory is an empty bank.
pub fn load_bank(dir: Option<&Path>) -> CliResult<Arc<ObjectBank>> {
    match dir {
        Some(d) if d.join("bank.json").exists() => {
            ObjectBank::load(d).map(Arc::new).map_err(CliError::setup)
        }
        _ => Ok(Arc::new(ObjectBank::new())),
    }
}

/// Reads a script; `seed` replaces whatever base the script declares.
pub fn read_script(path: &Path, seed: Option<u64>) -> CliResult<EditScript> {
    let bytes = fs::read(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut script = EditScript::from_json(&bytes).map_err(CliError::classify)?;
    if let Some(seed) = seed {
        script.base.seed = Some(seed);
        script.base.codes = None;
    }
    Ok(script)
}

/// Loads the script's segmentation map, resolved against `script_dir`.
pub fn load_scene(script: &EditScript, script_dir: &Path) -> CliResult<Option<Arc<Scene>>> {
    let Some(rel) = &script.base.segmentation else {
        return Ok(None);
    };
    let path = script_dir.join(rel);
    let seg = SegmentationMap::load(&path)
        .map_err(|e| CliError::Parse(format!("/base/segmentation: {e}")))?;
    Ok(Some(Arc::new(Scene::new(seg))))
}

pub fn execute(
    model: &Arc<GeneratorModel>,
    bank: &Arc<ObjectBank>,
    scene: Option<Arc<Scene>>,
    script: &EditScript,
) -> CliResult<Session> {
    Session::new(model.clone(), bank.clone(), scene, script).map_err(CliError::classify)
}

/// True for ops that place content at a single layer.
fn has_layer(op: &EditOp) -> bool {
    matches!(
        op.op,
        OpKind::Remove | OpKind::Insert | OpKind::Shift | OpKind::Rotate | OpKind::ClearRoom
    )
}

/// The script with every single-layer op moved to `layer`.
pub fn at_layer(script: &EditScript, layer: usize) -> EditScript {
    let mut s = script.clone();
    for op in s.edits.iter_mut().filter(|op| has_layer(op)) {
        op.layer = Some(layer);
    }
    s
}

/// `out.png` with layer 7 becomes `out.layer7.png`.
pub fn layer_output(out: &Path, layer: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.layer{layer}.png"))
}

pub fn write_png(path: &Path, image: &RgbImage) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Setup(format!("{}: {e}", dir.display())))?;
    }
    let bytes = image.to_png().map_err(CliError::setup)?;
    fs::write(path, bytes).map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))
}

pub struct RunOptions<'a> {
    pub script: &'a Path,
    pub model: &'a str,
    pub bank: Option<&'a Path>,
    pub out: &'a Path,
    pub dump_layers: &'a [usize],
    pub seed: Option<u64>,
}

/// `logan run`: writes the edited image, plus one image per requested layer.
pub fn run(opts: &RunOptions<'_>) -> CliResult<Vec<PathBuf>> {
    let script = read_script(opts.script, opts.seed)?;
    let model = load_model(opts.model)?;
    let bank = load_bank(opts.bank)?;
    let dir = opts.script.parent().unwrap_or(Path::new("."));
    let scene = load_scene(&script, dir)?;
    let session = execute(&model, &bank, scene.clone(), &script)?;
    write_png(opts.out, session.image())?;
    let mut written = vec![opts.out.to_path_buf()];
    for &l in opts.dump_layers {
        let swept = execute(&model, &bank, scene.clone(), &at_layer(&script, l))?;
        let path = layer_output(opts.out, l);
        write_png(&path, swept.image())?;
        written.push(path);
    }
    Ok(written)
}

/// `logan synthesize`: the unedited image for `seed`.
pub fn synthesize(model: &str, seed: u64, out: &Path) -> CliResult<()> {
    let model = load_model(model)?;
    let image = model
        .synthesize(&model.sample_codes(seed))
        .map_err(|e| CliError::Execution(e.to_string()))?;
    write_png(out, &image)
}

pub const REMOVAL_SWEEP: [usize; 4] = [4, 6, 8, 10];
pub const INSERTION_SWEEP: [usize; 4] = [4, 7, 10, 13];

/// `logan figures`: layer-sweep grids for removal and insertion on a toy scene.
///
/// Each grid is the unedited scene followed by the edit at each sweep layer.
pub fn figures(dir: &Path, model: &str, seed: u64) -> CliResult<Vec<PathBuf>> {
    let model = load_model(model)?;
    let empty = Arc::new(ObjectBank::new());
    let (h, w) = model.canonical_resolution();
    let source = Session::from_seed(model.clone(), empty, seed).map_err(CliError::classify)?;
    let mask = RegionMask::rect(h, w, w / 8, h / 2, w / 2, h * 7 / 8);
    let mut layers: Vec<usize> = REMOVAL_SWEEP
        .iter()
        .chain(&INSERTION_SWEEP)
        .copied()
        .filter(|&l| l <= model.layer_count())
        .collect();
    layers.sort_unstable();
    layers.dedup();
    let asset = source
        .extract_object("figure_object", &mask, "bed", &layers, None)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    let mut bank = ObjectBank::new();
    bank.insert(asset).map_err(CliError::setup)?;
    let bank = Arc::new(bank);

    let sweep = |base_seed: u64, op: EditOp, sweep: &[usize]| -> CliResult<RgbImage> {
        let mut frames = vec![Session::from_seed(model.clone(), bank.clone(), base_seed)
            .map_err(CliError::classify)?
            .image()
            .clone()];
        for &l in sweep.iter().filter(|&&l| l <= model.layer_count()) {
            let mut script = EditScript::new(logan_core::composer::BaseSpec::seed(base_seed));
            script.edits.push(op.clone().at_layer(l));
            frames.push(execute(&model, &bank, None, &script)?.image().clone());
        }
        RgbImage::hconcat(&frames).map_err(|e| CliError::Execution(e.to_string()))
    };

    let removal = sweep(seed, EditOp::remove("figure_object"), &REMOVAL_SWEEP)?;
    let insertion = sweep(
        seed + 1,
        EditOp::insert("figure_object").position(w as i64 / 2, h as i64 * 2 / 3),
        &INSERTION_SWEEP,
    )?;
    let paths = [
        dir.join("removal_sweep.png"),
        dir.join("insertion_sweep.png"),
    ];
    write_png(&paths[0], &removal)?;
    write_png(&paths[1], &insertion)?;
    Ok(paths.to_vec())
}

pub struct ExtractOptions<'a> {
    pub bank: &'a Path,
    pub model: &'a str,
    pub seed: u64,
    pub script: Option<&'a Path>,
    pub mask: &'a Path,
    pub id: &'a str,
    pub category: &'a str,
    pub layers: &'a [usize],
    pub priority: Option<u32>,
}

/// `logan bank extract`: lifts a masked object out of a scene into the bank.
pub fn bank_extract(opts: &ExtractOptions<'_>) -> CliResult<ObjectAsset> {
    let model = load_model(opts.model)?;
    let bank = load_bank(Some(opts.bank))?;
    let session = match opts.script {
        Some(path) => {
            let script = read_script(path, None)?;
            let scene = load_scene(&script, path.parent().unwrap_or(Path::new(".")))?;
            execute(&model, &bank, scene, &script)?
        }
        None => Session::from_seed(model.clone(), bank.clone(), opts.seed)
            .map_err(CliError::classify)?,
    };
    let bytes = fs::read(opts.mask)
        .map_err(|e| CliError::Setup(format!("{}: {e}", opts.mask.display())))?;
    let mask = RegionMask::from_png(&bytes).map_err(CliError::setup)?;
    let asset = session
        .extract_object(opts.id, &mask, opts.category, opts.layers, opts.priority)
        .map_err(CliError::setup)?;
    let mut bank = Arc::unwrap_or_clone(bank);
    bank.remove(opts.id);
    bank.insert(asset.clone()).map_err(CliError::setup)?;
    bank.save(opts.bank).map_err(CliError::setup)?;
    Ok(asset)
}

/// `logan bank list`: one tab-separated line per asset.
pub fn bank_list(dir: &Path) -> CliResult<Vec<String>> {
    let bank = load_bank(Some(dir))?;
    Ok(bank
        .assets()
        .map(|a| {
            let layers: Vec<String> = a.layers.keys().map(usize::to_string).collect();
            format!(
                "{}\t{}\tpriority={}\tbbox={},{},{},{}\tlayers={}",
                a.id,
                a.category,
                a.priority,
                a.bbox.x0,
                a.bbox.y0,
                a.bbox.x1,
                a.bbox.y1,
                layers.join(",")
            )
        })
        .collect())
}

/// `logan bank cluster`: fits pose clusters for one category and stores them.
pub fn bank_cluster(
    dir: &Path,
    category: &str,
    clusters: usize,
    dims: usize,
    seed: u64,
) -> CliResult<Vec<String>> {
    let mut bank = Arc::unwrap_or_clone(load_bank(Some(dir))?);
    let assets: Vec<&ObjectAsset> = bank.of_category(category).collect();
    if assets.is_empty() {
        return Err(CliError::Setup(format!(
            "no assets in category `{category}`"
        )));
    }
    let model = cluster_poses(&assets, clusters, (dims, dims), seed).map_err(CliError::setup)?;
    let summary = model
        .representatives
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            let members = model.assignments.values().filter(|&&c| c == i).count();
            format!("center {i}\trepresentative={rep}\tmembers={members}")
        })
        .collect();
    bank.set_clusters(model);
    bank.save(dir).map_err(CliError::setup)?;
    Ok(summary)
}
