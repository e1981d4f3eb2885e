use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use panoalign::geometry::{lift_points, normals_from_depth, to_column_frame};
use panoalign::graphopt::{level_plan, OptInputs};
use panoalign::io::{
    self, load_config, load_manifest, save_manifest, write_json, DepthEncoding,
    DepthUnit, LoadedManifest, Manifest, NormalFrameSpec, NormalSign, Provenance, Strictness,
};
use panoalign::metrics::{evaluate, EvalConfig};
use panoalign::oracle::{corrupt, gradcheck as run_gradcheck, render_scene, Corruption, SceneSpec, RNG_NAME};
use panoalign::pipeline::{merge_inputs, FLAT_INTENSITY};
use panoalign::resample::{erp_to_faces, merge_depth_to_erp, merge_normals_to_erp, Interp, NormalFrame};
use panoalign::{optimize, CameraModel, ErpGrid, Grid, OptConfig, FACE_COUNT, FACE_NAMES};

use crate::error::CliError;
use crate::SceneArg;

/// Largest instance `gradcheck` accepts.
const GRADCHECK_MAX: (usize, usize) = (32, 16);

const GRADCHECK_TOLERANCE: f64 = 1e-4;

const MANIFEST_NAME: &str = "manifest.json";

/// Coarsest pyramid height below which curved surfaces tend to collapse.
const MIN_COARSE_ROWS: usize = 64;

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{what} {} does not exist", path.display())))
    }
}

fn to_erp<T>(grid: Grid<T>, path: &Path) -> Result<ErpGrid<T>, CliError> {
    ErpGrid::new(grid).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn parse_size(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::validation(format!("size {text:?} is not WxH"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if h == 0 || w != 2 * h {
        return Err(CliError::validation(format!("size {w}x{h} is not a 2:1 layout")));
    }
    Ok((w, h))
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<PathBuf, CliError> {
    let manifest = out.join(MANIFEST_NAME);
    if manifest.exists() && !force {
        return Err(CliError::validation(format!(
            "{} exists; pass --force to overwrite",
            manifest.display()
        )));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))?;
    Ok(manifest)
}

fn face_size_or_default(face_size: Option<usize>, height: usize) -> Result<usize, CliError> {
    let n = face_size.unwrap_or(height / 2);
    if n == 0 {
        return Err(CliError::validation("face size must be positive"));
    }
    Ok(n)
}

fn print_json(value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::runtime(e.to_string())),
        _ => Ok(()),
    }
}

pub struct SplitArgs {
    pub erp: PathBuf,
    pub normals: Option<PathBuf>,
    pub intensity: Option<PathBuf>,
    pub out: PathBuf,
    pub face_size: Option<usize>,
    pub force: bool,
}

/// Faces are sampled nearest-neighbor so depth edges never blend.
pub fn split(args: &SplitArgs) -> Result<(), CliError> {
    require_file(&args.erp, "ERP input")?;
    let depth = to_erp(io::read_depth(&args.erp)?, &args.erp)?;
    let normals = match &args.normals {
        Some(p) => {
            require_file(p, "normal map")?;
            let map = io::read_normals(p)?;
            let n = to_erp(map.normals, p)?;
            depth
                .same_dims(&n)
                .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
            Some(n)
        }
        None => None,
    };
    let intensity = match &args.intensity {
        Some(p) => {
            require_file(p, "intensity image")?;
            let g = io::read_intensity(p)?;
            if g.dims() != depth.dims() {
                return Err(CliError::validation(format!(
                    "{} is {}x{}, depth is {}x{}",
                    p.display(),
                    g.width(),
                    g.height(),
                    depth.width(),
                    depth.height()
                )));
            }
            Some(std::fs::canonicalize(p).map_err(|e| CliError::runtime(e.to_string()))?)
        }
        None => None,
    };
    let height = depth.height();
    let n = face_size_or_default(args.face_size, height)?;
    let manifest_path = prepare_out_dir(&args.out, args.force)?;

    let mut manifest = Manifest::with_default_names(height, n, normals.is_some());
    manifest.depth_unit = DepthUnit::Meters;
    manifest.depth_encoding = DepthEncoding::Radial;
    manifest.normal_frame = NormalFrameSpec::World;
    manifest.intensity = intensity;

    let cam = CameraModel::new(n);
    let prov = Provenance::new("split").with_extra("face_size", json!(n));
    let depth_faces = erp_to_faces(&depth, &cam, Interp::Nearest);
    let normal_faces = normals.map(|g| erp_to_faces(&g, &cam, Interp::Nearest));
    for (c, entry) in manifest.ordered_faces().into_iter().enumerate() {
        let path = args.out.join(&entry.depth);
        io::write_depth(&path, &depth_faces.faces[c])?;
        prov.attach(&path)?;
        if let (Some(faces), Some(rel)) = (&normal_faces, &entry.normals) {
            let path = args.out.join(rel);
            io::write_normals(&path, &faces.faces[c])?;
            prov.attach(&path)?;
        }
    }
    let digest = save_manifest(&manifest_path, &manifest)?;
    prov.clone().with_digest(digest).attach(&manifest_path)?;
    println!("{}", manifest_path.display());
    Ok(())
}

fn face_id_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".face_id.pfm");
    PathBuf::from(name)
}

fn normal_frame(m: &Manifest) -> (NormalFrame, bool) {
    (
        m.normal_frame.into(),
        m.normal_sign == NormalSign::AwayFromCamera,
    )
}

fn open_manifest(path: &Path) -> Result<LoadedManifest, CliError> {
    require_file(path, "manifest")?;
    Ok(load_manifest(path)?)
}

pub fn merge(manifest: &Path, out: &Path, normals_out: Option<&Path>) -> Result<(), CliError> {
    let loaded = open_manifest(manifest)?;
    let m = &loaded.manifest;
    if normals_out.is_some() && !m.has_normals() {
        return Err(CliError::validation(format!(
            "{} lists no normal files but --normals-out was given",
            manifest.display()
        )));
    }
    let depth_faces = loaded.load_depth_faces()?;
    let merged = merge_depth_to_erp(&depth_faces, m.erp_height);

    let prov = Provenance::new("merge").with_digest(loaded.digest.clone());
    io::write_depth(out, &merged.depth)?;
    let ids = merged.face_id.map(|&c| c as f64);
    let id_path = face_id_path(out);
    io::write_depth(&id_path, &ids)?;
    prov.attach(&id_path)?;
    io::meta::merge_sidecar(
        out,
        &json!({
            "face_id_map": id_path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "face_order": FACE_NAMES,
            "invalid_pixels": merged.invalid_count(),
        }),
    )?;
    prov.attach(out)?;

    if let Some(path) = normals_out {
        let faces = loaded.load_normal_faces()?.expect("checked above");
        let (frame, flip) = normal_frame(m);
        let (normals, _) = merge_normals_to_erp(&faces, &merged.face_id, frame, flip);
        io::write_normals(path, &normals)?;
        prov.attach(path)?;
    }
    Ok(())
}

pub struct AlignArgs {
    pub manifest: PathBuf,
    pub config: Option<PathBuf>,
    pub lenient: bool,
    pub out: PathBuf,
    pub normals_out: Option<PathBuf>,
    pub ply: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Merged optimizer inputs; normals are derived from depth when the
/// manifest lists none.
fn build_inputs(loaded: &LoadedManifest) -> Result<OptInputs, CliError> {
    let m = &loaded.manifest;
    let depth_faces = loaded.load_depth_faces()?;
    let intensity = loaded.load_intensity()?;
    match loaded.load_normal_faces()? {
        Some(normal_faces) => {
            let (frame, flip) = normal_frame(m);
            Ok(merge_inputs(&depth_faces, &normal_faces, frame, flip, intensity, m.erp_height))
        }
        None => {
            log::warn!("manifest lists no normals; deriving them from the merged depth");
            let merged = merge_depth_to_erp(&depth_faces, m.erp_height);
            let (normals, n_valid) = normals_from_depth(&merged.depth);
            let mut valid = merged.valid;
            for (v, nv) in valid.data_mut().iter_mut().zip(n_valid.data()) {
                *v &= *nv;
            }
            Ok(OptInputs {
                depth: merged.depth,
                normals: to_column_frame(&normals),
                intensity: intensity.unwrap_or_else(|| ErpGrid::filled(m.erp_height, FLAT_INTENSITY)),
                face_id: merged.face_id,
                valid,
            })
        }
    }
}

fn gray_colors(intensity: &ErpGrid<f64>, mask: &ErpGrid<bool>) -> Vec<[u8; 3]> {
    intensity
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, m)| **m)
        .map(|(v, _)| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g]
        })
        .collect()
}

pub fn align(args: &AlignArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = open_manifest(&args.manifest)?;
    let (cfg, warnings) = match &args.config {
        Some(p) => {
            require_file(p, "config")?;
            let strictness = if args.lenient {
                Strictness::Warn
            } else {
                Strictness::Strict
            };
            load_config(p, strictness)?
        }
        None => (OptConfig::default(), Vec::new()),
    };
    let plan = level_plan(loaded.manifest.erp_height, &cfg)?;
    if plan[0].height < MIN_COARSE_ROWS {
        log::warn!(
            "coarsest level has {} rows; curved scenes may need fewer levels (at least {MIN_COARSE_ROWS} rows)",
            plan[0].height
        );
    }
    let inputs = build_inputs(&loaded)?;
    let merge_ms = started.elapsed().as_secs_f64() * 1e3;

    let opt_started = Instant::now();
    let result = optimize(&inputs, &cfg).map_err(|e| {
        let err = CliError::from(e);
        if let CliError::Runtime(msg) = err {
            CliError::runtime(format!(
                "{msg}; try a smaller lr_scale or step_unit, or fewer levels, in the config"
            ))
        } else {
            err
        }
    })?;
    let optimize_ms = opt_started.elapsed().as_secs_f64() * 1e3;

    let mut out_valid = inputs.valid.clone();
    for (v, d) in out_valid.data_mut().iter_mut().zip(result.depth.data()) {
        *v &= d.is_finite() && *d > 0.0;
    }

    let prov = Provenance::new("align")
        .with_config(&cfg)
        .with_digest(loaded.digest.clone());
    io::write_depth(&args.out, &result.depth)?;
    io::meta::merge_sidecar(&args.out, &json!({ "lambda": result.lambda }))?;
    prov.attach(&args.out)?;
    if let Some(path) = &args.normals_out {
        io::write_normals(path, &result.world_normals())?;
        prov.attach(path)?;
    }
    if let Some(path) = &args.ply {
        let mut cloud = lift_points(&result.depth, Some(&out_valid))?;
        cloud.colors = Some(gray_colors(&inputs.intensity, &out_valid));
        io::write_pointcloud(path, &cloud)?;
        prov.attach(path)?;
    }

    let levels: Vec<Value> = result
        .levels
        .iter()
        .map(|l| {
            json!({
                "level": l.plan.level,
                "width": l.plan.width,
                "height": l.plan.height,
                "iterations": l.plan.iterations,
                "learning_rate": l.plan.learning_rate,
                "initial_loss": l.initial.total,
                "final_loss": l.final_terms.total,
                "lambda": l.lambda,
                "elapsed_ms": l.elapsed_ms,
            })
        })
        .collect();
    let summary = json!({
        "lambda": result.lambda,
        "levels": levels,
        "config": cfg,
        "config_warnings": warnings,
    });
    print_json(&summary)?;

    if let Some(path) = &args.report {
        let report = json!({
            "lambda": result.lambda,
            "face_order": FACE_NAMES,
            "pyramid_phase": result.pyramid_phase,
            "plan": plan,
            "levels": result.levels,
            "config": cfg,
            "config_warnings": warnings,
            "valid_pixels": inputs.valid.data().iter().filter(|v| **v).count(),
            "timings_ms": {
                "merge": merge_ms,
                "optimize": optimize_ms,
                "total": started.elapsed().as_secs_f64() * 1e3,
            },
            "provenance": prov,
        });
        write_json(path, &report)?;
    }
    Ok(())
}

pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub metrics: String,
    pub tau: f64,
    pub voxel: f64,
    pub max_points: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

fn parse_metric_groups(text: &str) -> Result<(bool, bool), CliError> {
    let (mut with_2d, mut with_3d) = (false, false);
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.to_ascii_lowercase().as_str() {
            "2d" => with_2d = true,
            "3d" => with_3d = true,
            other => {
                return Err(CliError::validation(format!(
                    "unknown metric group {other:?}; expected 2d or 3d"
                )))
            }
        }
    }
    if !(with_2d || with_3d) {
        return Err(CliError::validation("--metrics selects no metric group"));
    }
    Ok((with_2d, with_3d))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (with_2d, with_3d) = parse_metric_groups(&args.metrics)?;
    require_file(&args.pred, "prediction")?;
    require_file(&args.gt, "ground truth")?;
    let pred = to_erp(io::read_depth(&args.pred)?, &args.pred)?;
    let gt = to_erp(io::read_depth(&args.gt)?, &args.gt)?;
    if pred.dims() != gt.dims() {
        return Err(CliError::validation(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let cfg = EvalConfig {
        fscore_tau: args.tau,
        voxel_size: args.voxel,
        max_points: args.max_points,
        seed: args.seed,
    };
    let report = evaluate(&pred, &gt, None, &cfg, with_2d, with_3d)?;
    print_json(&json!(report))?;
    if let Some(path) = &args.out {
        let prov = Provenance::new("eval").with_config(&cfg).with_seed(args.seed);
        write_json(path, &json!({ "report": report, "provenance": prov }))?;
    }
    Ok(())
}

pub struct SynthArgs {
    pub scene: SceneArg,
    pub size: String,
    pub scales: Vec<f64>,
    pub seed: u64,
    pub face_size: Option<usize>,
    pub normal_noise: f64,
    pub depth_noise: f64,
    pub out: PathBuf,
    pub force: bool,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let (_, height) = parse_size(&args.size)?;
    let scales: [f64; FACE_COUNT] = args
        .scales
        .as_slice()
        .try_into()
        .map_err(|_| CliError::validation(format!("--scales needs {FACE_COUNT} values")))?;
    let corruption = Corruption {
        scales,
        normal_noise_deg: args.normal_noise,
        depth_noise: args.depth_noise,
    };
    corruption.validate().map_err(CliError::validation)?;
    let spec = match args.scene {
        SceneArg::Box => SceneSpec::default_box(height),
        SceneArg::Sphere => SceneSpec::default_sphere(height),
    };
    let n = face_size_or_default(args.face_size, height)?;
    let manifest_path = prepare_out_dir(&args.out, args.force)?;

    let rendered = render_scene(&spec);
    let cam = CameraModel::new(n);
    let faces = corrupt(&spec, &cam, &corruption, args.seed);

    let mut manifest = Manifest::with_default_names(height, n, true);
    manifest.gt_depth = Some("gt_depth.pfm".into());
    manifest.intensity = Some("intensity.pfm".into());

    let prov = Provenance::new("synth")
        .with_seed(args.seed)
        .with_extra("scene", json!(spec))
        .with_extra("corruption", json!(corruption))
        .with_extra("rng", json!(RNG_NAME));
    let mut written = Vec::new();
    for (c, entry) in manifest.ordered_faces().into_iter().enumerate() {
        let path = args.out.join(&entry.depth);
        io::write_depth(&path, &faces.depth.faces[c])?;
        written.push(path);
        let path = args.out.join(entry.normals.as_ref().expect("with normals"));
        io::write_normals(&path, &faces.normals.faces[c])?;
        written.push(path);
    }
    let gt_path = args.out.join("gt_depth.pfm");
    io::write_depth(&gt_path, &rendered.depth)?;
    written.push(gt_path);
    let intensity_path = args.out.join("intensity.pfm");
    io::write_depth(&intensity_path, &rendered.intensity)?;
    written.push(intensity_path);
    for path in &written {
        prov.attach(path)?;
    }
    let digest = save_manifest(&manifest_path, &manifest)?;
    prov.with_digest(digest).attach(&manifest_path)?;
    println!("{}", manifest_path.display());
    Ok(())
}

pub fn gradcheck(seed: u64, size: &str) -> Result<(), CliError> {
    let (w, h) = parse_size(size)?;
    if w > GRADCHECK_MAX.0 || h > GRADCHECK_MAX.1 {
        return Err(CliError::validation(format!(
            "size {w}x{h} exceeds {}x{}",
            GRADCHECK_MAX.0, GRADCHECK_MAX.1
        )));
    }
    let report = run_gradcheck(seed, w, h).map_err(|e| CliError::runtime(e.to_string()))?;
    print_json(&json!({
        "seed": seed,
        "width": w,
        "height": h,
        "tolerance": GRADCHECK_TOLERANCE,
        "report": report,
    }))?;
    if report.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}",
            report.max_relative_error
        )))
    }
}
