//! One function per subcommand. Each writes its records to stdout and
//! reports per-input failures on stderr before returning.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};
use tubeloc::darknet::{serialize_weights, transplant_backbone, TransplantPlan};
use tubeloc::evalbench::{bench_inference, evaluate_orientation, run_eval, BenchReport, Dataset, OrientationReport, MIN_ITERATIONS};
use tubeloc::imgcore::{crop, load_pfm, load_pgm, save_pgm, BoundingBox, GrayImage};
use tubeloc::nnexec::{calibrate, quantize_network, DetectOptions, Detection, Network};
use tubeloc::posecv::{estimate_pose_traced, Point2, PoseParams, PoseTrace, TubePoseImage};
use tubeloc::stereo3d::{build_dem, lift_pose_to_3d, StereoRig, TubePose3D};

use crate::config::{ModelConfig, RunConfig};
use crate::error::CliError;
use crate::model::{cfg_text, load_def, load_detector, load_weights, model_label, read_bytes, read_text, required_weights};

/// `x,y,w,h` in image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxArg(pub BoundingBox<f32>);

impl FromStr for BoxArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<f32>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match v[..] {
            [x, y, w, h] if v.iter().all(|c| c.is_finite()) && w > 0.0 && h > 0.0 => Ok(Self(BoundingBox::new(x, y, w, h))),
            [_, _, _, _] => Err("box needs finite values and positive width and height".into()),
            _ => Err(format!("expected x,y,w,h, got {} value(s)", v.len())),
        }
    }
}

/// `NAME=WEIGHTS`, `NAME=CFG,WEIGHTS` or `NAME=CFG,WEIGHTS,CALIB`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub model: ModelConfig,
}

impl FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, files) = s.split_once('=').ok_or("expected NAME=[CFG,]WEIGHTS[,CALIB]")?;
        if name.is_empty() {
            return Err("empty model name".into());
        }
        let parts: Vec<PathBuf> = files.split(',').map(PathBuf::from).collect();
        let model = match &parts[..] {
            [w] => ModelConfig { cfg: None, weights: Some(w.clone()), calibration: None },
            [c, w] => ModelConfig { cfg: Some(c.clone()), weights: Some(w.clone()), calibration: None },
            [c, w, q] => ModelConfig { cfg: Some(c.clone()), weights: Some(w.clone()), calibration: Some(q.clone()) },
            _ => return Err(format!("expected 1 to 3 comma-separated files, got {}", parts.len())),
        };
        Ok(Self { name: name.to_string(), model })
    }
}

pub struct Ctx {
    pub config: RunConfig,
    pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs())
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} worker(s): {e}", config.jobs())))?;
        Ok(Self { config, pool })
    }

    fn detect_options(&self) -> DetectOptions {
        DetectOptions { conf_threshold: self.config.thresholds.confidence, nms_iou: self.config.thresholds.nms_iou }
    }

    fn pose_params(&self) -> PoseParams {
        PoseParams { block: self.config.pose.block, offset: self.config.pose.offset }
    }

    /// Order-preserving parallel map bounded by `--jobs`.
    fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Path prefix for debug rasters of `image`, when debugging is on.
    fn debug_prefix(&self, image: &Path, tag: Option<usize>) -> Result<Option<PathBuf>, CliError> {
        if !self.config.output.debug {
            return Ok(None);
        }
        let mut name = stem(image);
        if let Some(k) = tag {
            let _ = write!(name, ".det{k}");
        }
        Ok(Some(self.out_dir()?.join(name)))
    }

    fn rig(&self) -> Result<StereoRig<f64>, CliError> {
        match self.config.rig.path.as_deref() {
            None => Ok(StereoRig::default()),
            Some(path) => StereoRig::from_config_str(&read_text(path)?).map_err(|e| CliError::from(e).in_file(path)),
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned())
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn emit(record: &Value) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{record}").map_err(|e| CliError::Data(format!("stdout: {e}")))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn load_image(path: &Path) -> Result<GrayImage, CliError> {
    load_pgm(path).map_err(|e| CliError::from(e).in_file(path))
}

/// Sorted `.pgm` files directly inside `dir`.
fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Prints every failure and turns them into the command's outcome.
fn finish(failures: &[CliError], total: usize) -> Result<(), CliError> {
    for e in failures {
        eprintln!("tubeloc: {e}");
    }
    match failures.iter().map(CliError::exit_code).max() {
        None => Ok(()),
        Some(code) => Err(CliError::Partial { code, failed: failures.len(), total }),
    }
}

fn box_json(b: &BoundingBox<f32>) -> Value {
    json!([b.x, b.y, b.w, b.h])
}

fn point_json(p: Point2<f64>) -> Value {
    json!([p.x, p.y])
}

pub fn detect(ctx: &Ctx, images: &[PathBuf]) -> Result<(), CliError> {
    let model = load_detector(&ctx.config.model)?;
    let opts = ctx.detect_options();
    let results = ctx.par_map(images, |path| -> Result<Vec<Detection>, CliError> {
        let image = load_image(path)?;
        model.detect(&image, &opts).map_err(|e| CliError::from(e).in_file(path))
    });
    let mut failures = Vec::new();
    for (path, result) in images.iter().zip(results) {
        match result {
            Ok(dets) => {
                for d in dets {
                    emit(&d.to_record(&name(path)))?;
                }
            }
            Err(e) => failures.push(e),
        }
    }
    finish(&failures, images.len())
}

/// Crop -> mask -> contour -> axis inside `b`, seeded at the box centre.
fn pose_in_box(image: &GrayImage, b: &BoundingBox<f32>, params: &PoseParams, debug: Option<&Path>) -> Result<TubePoseImage, CliError> {
    let b = b.cast::<f64>();
    let c = crop(image, &b)?;
    let (cx, cy) = b.center();
    let (lx, ly) = c.to_local(cx, cy);
    let (trace, result) = estimate_pose_traced(&c, Point2::new(lx, ly), params)?;
    if let Some(prefix) = debug {
        write_debug(&trace, prefix)?;
    }
    Ok(result?)
}

/// One PGM per stage: `<prefix>.{blurred,gradient,equalized,mask,contours}.pgm`.
/// The contour raster shows every boundary at 96 and the selected one at 255.
fn write_debug(trace: &PoseTrace, prefix: &Path) -> Result<(), CliError> {
    let s = &trace.stages;
    let mut contours = GrayImage::filled(s.mask.width(), s.mask.height(), 0);
    for (i, c) in trace.contours.iter().enumerate() {
        let v = if trace.selection.is_some_and(|sel| sel.index == i) { 255 } else { 96 };
        for &(x, y) in &c.points {
            contours.set(x as usize, y as usize, v);
        }
    }
    let stages = [
        ("blurred", &s.blurred),
        ("gradient", &s.gradient),
        ("equalized", &s.equalized),
        ("mask", &s.mask.to_image()),
        ("contours", &contours),
    ];
    for (stage, img) in stages {
        let path = PathBuf::from(format!("{}.{stage}.pgm", prefix.display()));
        save_pgm(img, &path).map_err(CliError::from)?;
    }
    Ok(())
}

fn pose_json(pose: &TubePoseImage) -> Value {
    json!({
        "endpoints_px": [point_json(pose.endpoints[0]), point_json(pose.endpoints[1])],
        "centroid_px": point_json(pose.centroid),
        "orientation_deg": pose.orientation_deg,
        "degraded": pose.degraded,
        "low_anisotropy": pose.low_anisotropy,
    })
}

fn most_confident(dets: Vec<Detection>) -> Option<Detection> {
    dets.into_iter().reduce(|best, d| if d.confidence > best.confidence { d } else { best })
}

pub fn pose(ctx: &Ctx, image_path: &Path, bbox: Option<BoundingBox<f32>>) -> Result<(), CliError> {
    let image = load_image(image_path)?;
    let (b, confidence) = match bbox {
        Some(b) => (b, None),
        None => {
            let model = load_detector(&ctx.config.model)?;
            let d = most_confident(model.detect(&image, &ctx.detect_options())?).ok_or_else(|| {
                CliError::stage("detect", format!("no detection at confidence >= {}", ctx.config.thresholds.confidence))
            })?;
            (d.bbox, Some(d.confidence))
        }
    };
    let debug = ctx.debug_prefix(image_path, None)?;
    let pose = pose_in_box(&image, &b, &ctx.pose_params(), debug.as_deref())?;
    let mut record = pose.to_record(&name(image_path));
    record["box"] = box_json(&b);
    record["confidence"] = json!(confidence);
    record["low_anisotropy"] = json!(pose.low_anisotropy);
    emit(&record)
}

fn point3_json(p: tubeloc::Point3) -> Value {
    json!(p.to_array())
}

fn localize_json(image: &str, disparity: &str, det: &Detection, manual: bool, pose: &TubePoseImage, p3: &TubePose3D<f64>) -> Value {
    json!({
        "image": image,
        "disparity": disparity,
        "detection": {
            "class_id": det.class_id,
            "confidence": if manual { Value::Null } else { json!(det.confidence) },
            "box": box_json(&det.bbox),
        },
        "pose_2d": pose_json(pose),
        "endpoints_m": [point3_json(p3.endpoints[0]), point3_json(p3.endpoints[1])],
        "centroid_m": point3_json(p3.centroid),
        "yaw_deg": p3.yaw_deg,
        "length_m": p3.length_m,
        "length_plausible": p3.length_plausible,
    })
}

pub fn localize(ctx: &Ctx, image_path: &Path, disparity_path: &Path, bbox: Option<BoundingBox<f32>>, dem: bool) -> Result<(), CliError> {
    let rig = ctx.rig()?;
    let image = load_image(image_path)?;
    let disparity = load_pfm(disparity_path).map_err(|e| CliError::from(e).in_file(disparity_path))?;
    if disparity.nonfinite_replaced > 0 {
        eprintln!("tubeloc: {}: {} non-finite disparities treated as invalid", name(disparity_path), disparity.nonfinite_replaced);
    }
    let disparity = disparity.image;
    if (disparity.width(), disparity.height()) != (image.width(), image.height()) {
        return Err(CliError::Data(format!(
            "disparity {}x{} does not match image {}x{}",
            disparity.width(),
            disparity.height(),
            image.width(),
            image.height()
        )));
    }
    if dem {
        let map = build_dem(&disparity, &image, &rig, ctx.config.output.dem_cell_m)?;
        let prefix = ctx.out_dir()?.join(format!("{}.dem", stem(image_path)));
        let with = |ext: &str| PathBuf::from(format!("{}.{ext}", prefix.display()));
        save_pgm(&map.to_pgm().0, with("pgm"))?;
        write_file(&with("txt"), map.pgm_sidecar())?;
        write_file(&with("csv"), map.to_csv())?;
    }
    let (targets, manual) = match bbox {
        Some(b) => (vec![Detection { bbox: b, confidence: 1.0, class_id: 0 }], true),
        None => (load_detector(&ctx.config.model)?.detect(&image, &ctx.detect_options())?, false),
    };
    let params = ctx.pose_params();
    let mut failures = Vec::new();
    for (k, det) in targets.iter().enumerate() {
        let result = (|| -> Result<Value, CliError> {
            let debug = ctx.debug_prefix(image_path, Some(k))?;
            let pose = pose_in_box(&image, &det.bbox, &params, debug.as_deref())?;
            let p3 = lift_pose_to_3d(&pose, &disparity, &rig)?;
            Ok(localize_json(&name(image_path), &name(disparity_path), det, manual, &pose, &p3))
        })();
        match result {
            Ok(record) => emit(&record)?,
            Err(e) => failures.push(e.context(format!("{} detection {k}", name(image_path)))),
        }
    }
    finish(&failures, targets.len())
}

pub fn quantize(ctx: &Ctx, calib_dir: &Path, out: &Path) -> Result<(), CliError> {
    let model = &ctx.config.model;
    let cfg = cfg_text(model.cfg.as_deref())?;
    let def = load_def(model.cfg.as_deref())?;
    let weights_path = required_weights(model)?;
    let weights = read_bytes(weights_path)?;
    let net = Network::new(&def, &load_weights(weights_path, &def)?)?;
    let paths = pgm_files(calib_dir)?;
    if paths.is_empty() {
        return Err(CliError::Data(format!("{}: no .pgm calibration images", calib_dir.display())));
    }
    let images = ctx.par_map(&paths, |p| load_image(p)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let calibration = calibrate(&net, &images)?;
    quantize_network(&net, &calibration)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let with = |ext: &str| PathBuf::from(format!("{}.{ext}", out.display()));
    write_file(&with("cfg"), cfg)?;
    write_file(&with("weights"), weights)?;
    write_file(&with("calib"), calibration.to_sidecar())?;
    for (tensor, p) in calibration.ordered() {
        emit(&json!({ "tensor": tensor, "scale": p.scale, "zero_point": p.zero_point }))?;
    }
    Ok(())
}

pub fn transplant(ctx: &Ctx, source: &Path, dest: &Path, source_cfg: Option<&Path>, cutoff: Option<usize>, out: &Path) -> Result<(), CliError> {
    let dest_cfg = ctx.config.model.cfg.as_deref();
    let dest_def = load_def(dest_cfg)?;
    let source_def = match source_cfg {
        Some(path) => load_def(Some(path))?,
        None => dest_def.clone(),
    };
    let src = load_weights(source, &source_def)?;
    let dst = load_weights(dest, &dest_def)?;
    let mut plan = cutoff.map_or_else(|| TransplantPlan::default_for(&dest_def), TransplantPlan::new);
    plan.source = name(source);
    plan.dest = name(dest);
    let merged = transplant_backbone(&src, &dst, &plan)?;
    write_file(out, serialize_weights(&merged))?;
    let copied: Vec<usize> = merged.layers.iter().map(|l| l.layer).filter(|&l| l < plan.cutoff).collect();
    emit(&json!({
        "source": name(source),
        "dest": name(dest),
        "output": name(out),
        "cutoff": plan.cutoff,
        "copied_layers": copied,
    }))
}

fn orientation_json(r: &OrientationReport) -> Value {
    let s = r.stats.as_ref();
    json!({
        "instances": s.map_or(0, |s| s.errors.len()),
        "mean_deg": s.map(|s| s.mean),
        "std_deg": s.map(|s| s.std),
        "std_sample_deg": s.map(|s| s.std_sample),
        "max_deg": s.map(|s| s.max),
        "fraction_under_5": s.map(|s| s.fraction_under_5),
        "histogram": s.map(|s| s.histogram.to_vec()),
        "degraded": r.degraded,
        "failures": r.failures.iter().map(|(i, e)| json!({"instance": i, "error": e})).collect::<Vec<_>>(),
    })
}

/// Error summary plus a 5° histogram, one bin per row.
fn orientation_table(r: &OrientationReport) -> String {
    let mut out = String::new();
    let Some(s) = &r.stats else {
        let _ = writeln!(out, "orientation: no estimates ({} failure(s))", r.failures.len());
        return out;
    };
    let _ = writeln!(out, "{:<16}  {:>12}", "Orientation", "error (deg)");
    let _ = writeln!(out, "{:<16}  {:>12}", "Instances", s.errors.len());
    let _ = writeln!(out, "{:<16}  {:>5.2} ± {:<5.2}", "Mean ± std", s.mean, s.std);
    let _ = writeln!(out, "{:<16}  {:>11.2}%", "Under 5°", 100.0 * s.fraction_under_5);
    let _ = writeln!(out, "{:<16}  {:>12}", "Degraded", r.degraded);
    let _ = writeln!(out, "{:<16}  {:>12}", "Failed", r.failures.len());
    for (i, n) in s.histogram.iter().enumerate() {
        let _ = writeln!(out, "{:>6}–{:<2}°  {:>12}", i * 5, i * 5 + 5, n);
    }
    out
}

pub fn eval(ctx: &Ctx, dataset: &Path, orientation: bool, table: bool) -> Result<(), CliError> {
    let ds = Dataset::load(dataset)?;
    let model = &ctx.config.model;
    if model.weights.is_none() && !orientation {
        return Err(CliError::Usage("eval needs --weights to score detection, --orientation to score pose, or both".into()));
    }
    let mut record = json!({ "dataset": name(dataset), "images": ds.entries.len(), "labels": ds.label_count() });
    let mut text = String::new();
    let mut failures = Vec::new();
    if model.weights.is_some() {
        let detector = load_detector(model)?;
        let report = run_eval(&model_label(model), detector.as_ref(), &ds, &ctx.detect_options(), ctx.config.thresholds.match_iou, ctx.config.jobs());
        record["detection"] = report.to_json();
        text.push_str(&report.to_table());
        failures.extend(report.failures.iter().map(|(image, e)| CliError::Data(format!("{image}: {e}"))));
    }
    if orientation {
        let report = evaluate_orientation(&ds, &ctx.pose_params(), ctx.config.jobs());
        record["orientation"] = orientation_json(&report);
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&orientation_table(&report));
    }
    if ctx.config.output.dir.is_some() {
        let dir = ctx.out_dir()?;
        write_file(&dir.join("eval.json"), serde_json::to_string_pretty(&record).expect("json value serializes"))?;
        write_file(&dir.join("eval.txt"), &text)?;
    }
    if table {
        print!("{text}");
    } else {
        emit(&record)?;
    }
    finish(&failures, ds.entries.len())
}

fn bench_json(report: &BenchReport) -> Value {
    let fastest = report.rows.iter().min_by(|a, b| a.mean_ms.total_cmp(&b.mean_ms));
    let ratios: Vec<Value> = fastest
        .map(|f| {
            report
                .rows
                .iter()
                .filter(|r| r.model != f.model || r.path != f.path)
                .map(|r| json!({ "model": r.model, "path": r.path, "baseline_model": f.model, "baseline_path": f.path, "ratio": r.mean_ms / f.mean_ms }))
                .collect()
        })
        .unwrap_or_default();
    json!({ "rows": report.rows, "ratios": ratios })
}

pub fn bench(ctx: &Ctx, specs: &[ModelSpec], images_dir: &Path, warmup: usize, iters: usize, table: bool) -> Result<(), CliError> {
    if iters < MIN_ITERATIONS {
        return Err(CliError::Usage(format!("--iters must be at least {MIN_ITERATIONS}")));
    }
    let paths = pgm_files(images_dir)?;
    if paths.is_empty() {
        return Err(CliError::Data(format!("{}: no .pgm images", images_dir.display())));
    }
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
    let models: Vec<(String, ModelConfig)> = if specs.is_empty() {
        vec![(model_label(&ctx.config.model), ctx.config.model.clone())]
    } else {
        specs.iter().map(|s| (s.name.clone(), s.model.clone())).collect()
    };
    let mut report = BenchReport::default();
    for (label, model) in &models {
        let detector = load_detector(model)?;
        report.rows.push(bench_inference(label, detector.as_ref(), &images, warmup, iters)?);
    }
    if table {
        print!("{}", report.to_table());
        Ok(())
    } else {
        emit(&bench_json(&report))
    }
}
