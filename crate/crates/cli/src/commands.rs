use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fiberseg::augment::AugmentConfig;
use fiberseg::classic::{segment_classic as run_classic, ClassicParams, Roi};
use fiberseg::dataset::{crops, ChunkDataset, SliceDataset};
use fiberseg::labeling::fiber_stats;
use fiberseg::metrics::{category_map, evaluate_stack, threshold, EvalOptions, StdConvention};
use fiberseg::nn::train::{train_with, LossKind};
use fiberseg::nn::{build, load_weights, save_weights, ArchSpec, Dataset, OptimizerKind, TrainConfig};
use fiberseg::phantom::{generate, PhantomConfig};
use fiberseg::predictor::{label_instances, label_slices_wusem, predict_volume, PredictConfig};
use fiberseg::tiler::TileSpec;
use fiberseg::volume::{open_source, read_all, Volume, VolumeFormat, VolumeSource, VoxelData};
use fiberseg::SegError;
use ndarray::{s, Array3, Axis};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Settings;
use crate::output::Staging;
use crate::{ClassicArgs, CliError, Context, EvaluateArgs, PhantomArgs, PredictArgs, ReportArgs, TrainArgs};

fn o<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn on(flag: bool) -> Option<String> {
    flag.then(|| "true".to_string())
}

fn joined(v: &[String]) -> Option<String> {
    (!v.is_empty()).then(|| v.join(","))
}

fn input_path(s: &Settings, key: &str) -> Result<PathBuf, CliError> {
    let v = s.str(key);
    if v.is_empty() {
        return Err(CliError::Usage(format!("`{key}` is required")));
    }
    existing(v)
}

fn existing(v: &str) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(v);
    if !p.exists() {
        return Err(CliError::Domain(format!("input not found: {}", p.display())));
    }
    Ok(p)
}

fn open(path: &Path, s: &Settings) -> Result<Box<dyn VolumeSource>, CliError> {
    Ok(open_source(path, s.str("io.pattern"))?)
}

fn stack_format(s: &Settings, key: &str) -> Result<VolumeFormat, CliError> {
    match s.str(key) {
        "raw" => Ok(VolumeFormat::Raw),
        "stack" => Ok(VolumeFormat::SliceStack { pattern: s.str("io.pattern").to_string() }),
        other => Err(CliError::Usage(format!("`{key}` = {other:?}: expected raw or stack"))),
    }
}

fn volume_name(base: &str, format: &VolumeFormat) -> String {
    match format {
        VolumeFormat::Raw => format!("{base}.raw"),
        VolumeFormat::SliceStack { .. } => base.to_string(),
    }
}

fn named(name: impl Into<String>, spacing: f64, data: VoxelData) -> Result<Volume, CliError> {
    let mut v = Volume::new(name, data)?;
    v.spacing_um = spacing;
    Ok(v)
}

fn mask_u8(mask: &Array3<bool>) -> VoxelData {
    VoxelData::U8(mask.mapv(|b| if b { 255 } else { 0 }))
}

const PHANTOM_DEFAULTS: &[(&str, &str)] = &[
    ("phantom.name", "phantom"),
    ("phantom.n_fibers", "200"),
    ("phantom.radius_min", "6.5"),
    ("phantom.radius_max", "10"),
    ("phantom.depth", "64"),
    ("phantom.height", "512"),
    ("phantom.width", "512"),
    ("phantom.background", "0.2"),
    ("phantom.foreground", "0.8"),
    ("phantom.noise", "0.05"),
    ("phantom.min_gap", "2"),
    ("phantom.defect_slices", ""),
    ("phantom.max_attempts", "10000"),
    ("phantom.format", "stack"),
];

pub fn phantom(a: &PhantomArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(
        &a.common,
        PHANTOM_DEFAULTS,
        &[
            ("phantom.name", o(&a.name)),
            ("phantom.n_fibers", o(&a.n_fibers)),
            ("phantom.radius_min", o(&a.radius_min)),
            ("phantom.radius_max", o(&a.radius_max)),
            ("phantom.depth", o(&a.depth)),
            ("phantom.height", o(&a.height)),
            ("phantom.width", o(&a.width)),
            ("phantom.noise", o(&a.noise)),
            ("phantom.defect_slices", o(&a.defect_slices)),
            ("phantom.format", o(&a.format)),
        ],
    )?;
    let s = &ctx.settings;
    let cfg = PhantomConfig {
        name: s.str("phantom.name").to_string(),
        n_fibers: s.get("phantom.n_fibers")?,
        radius_min: s.get("phantom.radius_min")?,
        radius_max: s.get("phantom.radius_max")?,
        depth: s.get("phantom.depth")?,
        height: s.get("phantom.height")?,
        width: s.get("phantom.width")?,
        background: s.get("phantom.background")?,
        foreground: s.get("phantom.foreground")?,
        noise: s.get("phantom.noise")?,
        min_gap: s.get("phantom.min_gap")?,
        defect_slices: s.get_list("phantom.defect_slices")?,
        max_attempts: s.get("phantom.max_attempts")?,
        seed: ctx.seed,
    };
    let format = stack_format(s, "phantom.format")?;
    ctx.log_settings("phantom");
    let p = generate(&cfg)?;
    let st = Staging::new(&ctx.out)?;
    let image = volume_name("image", &format);
    st.write_volume(&image, &p.image_volume(), &format)?;
    st.write_volume("gold.raw", &p.label_volume(), &VolumeFormat::Raw)?;
    st.write_json("phantom.json", &p.metadata())?;
    log::info!("placed {} fibers in a {}x{}x{} volume", p.fibers.len(), cfg.depth, cfg.height, cfg.width);
    st.commit("phantom", s, json!({ "image": image, "gold": "gold.raw", "fibers": p.fibers.len() }))?;
    Ok(())
}

const AUGMENT_DEFAULTS: &[(&str, &str)] = &[
    ("augment.enabled", "true"),
    ("augment.rotation_range", "10"),
    ("augment.horizontal_flip", "true"),
    ("augment.vertical_flip", "true"),
    ("augment.width_shift", "0.05"),
    ("augment.height_shift", "0.05"),
    ("augment.zoom_range", "0.1"),
    ("augment.shear_range", "5"),
    ("augment.z_flip", "true"),
];

const TRAIN_DEFAULTS: &[(&str, &str)] = &[
    ("train.arch", "unet2d"),
    ("train.scale", "desk"),
    ("train.depth", "auto"),
    ("train.base_channels", "auto"),
    ("train.growth_rate", "auto"),
    ("train.layers_per_block", "auto"),
    ("train.dropout", "auto"),
    ("train.epochs", "5"),
    ("train.batch_size", "auto"),
    ("train.learning_rate", "auto"),
    ("train.optimizer", "adam"),
    ("train.crop", "auto"),
    ("train.step", "auto"),
    ("train.inputs", ""),
    ("train.golds", ""),
    ("train.val_inputs", ""),
    ("train.val_golds", ""),
];

fn augment_config(s: &Settings, seed: u64) -> Result<AugmentConfig, CliError> {
    if !s.get_bool("augment.enabled")? {
        return Ok(AugmentConfig { seed, ..AugmentConfig::none() });
    }
    let cfg = AugmentConfig {
        rotation_range: s.get("augment.rotation_range")?,
        horizontal_flip: s.get_bool("augment.horizontal_flip")?,
        vertical_flip: s.get_bool("augment.vertical_flip")?,
        width_shift: s.get("augment.width_shift")?,
        height_shift: s.get("augment.height_shift")?,
        zoom_range: s.get("augment.zoom_range")?,
        shear_range: s.get("augment.shear_range")?,
        z_flip: s.get_bool("augment.z_flip")?,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Architecture from `[train]`, starting at the chosen scale's defaults.
fn arch_spec(s: &Settings) -> Result<(ArchSpec, bool), CliError> {
    let (family, dims) = ArchSpec::parse_id(s.str("train.arch"))?;
    let paper = match s.str("train.scale") {
        "paper" => true,
        "desk" => false,
        other => return Err(CliError::Usage(format!("`train.scale` = {other:?}: expected desk or paper"))),
    };
    let mut spec = if paper { ArchSpec::paper(family, dims) } else { ArchSpec::desk(family, dims) };
    if let Some(v) = s.get_opt("train.depth")? {
        spec.depth = v;
    }
    if let Some(v) = s.get_opt("train.base_channels")? {
        spec.base_channels = v;
    }
    if let Some(v) = s.get_opt("train.growth_rate")? {
        spec.growth_rate = v;
    }
    if let Some(v) = s.get_opt("train.layers_per_block")? {
        spec.layers_per_block = v;
    }
    if let Some(v) = s.get_opt("train.dropout")? {
        spec.dropout_rate = v;
    }
    spec.validate()?;
    Ok((spec, paper))
}

fn sized_list(s: &Settings, key: &str, dims: usize, default: Vec<usize>) -> Result<Vec<usize>, CliError> {
    let v = match s.str(key) {
        "" | "auto" => default,
        _ => s.get_list(key)?,
    };
    if v.len() != dims || v.contains(&0) {
        return Err(CliError::Usage(format!("`{key}` needs {dims} positive extents, got {v:?}")));
    }
    Ok(v)
}

fn load_pair(image: &Path, gold: &Path, s: &Settings) -> Result<(Array3<f32>, Array3<f32>), CliError> {
    let img = read_all(&*open(image, s)?)?.to_f32();
    let mask = read_all(&*open(gold, s)?)?.to_f32().mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    if img.dim() != mask.dim() {
        return Err(SegError::ShapeMismatch(format!(
            "{} is {:?} but {} is {:?}",
            image.display(),
            img.dim(),
            gold.display(),
            mask.dim()
        ))
        .into());
    }
    Ok((img, mask))
}

fn build_dataset(
    pairs: &[(Array3<f32>, Array3<f32>)],
    dims: usize,
    crop: &[usize],
    step: &[usize],
    augment: AugmentConfig,
) -> Result<Box<dyn Dataset>, CliError> {
    if dims == 2 {
        let (mut images, mut masks) = (Vec::new(), Vec::new());
        for (img, mask) in pairs {
            for z in 0..img.len_of(Axis(0)) {
                let size = [1, crop[0], crop[1]];
                let stride = [1, step[0], step[1]];
                let a = crops(&img.slice(s![z..z + 1, .., ..]), size, stride)?;
                let b = crops(&mask.slice(s![z..z + 1, .., ..]), size, stride)?;
                images.extend(a.into_iter().map(|c| c.index_axis_move(Axis(0), 0)));
                masks.extend(b.into_iter().map(|c| c.index_axis_move(Axis(0), 0)));
            }
        }
        Ok(Box::new(SliceDataset::new(images, masks, augment)?))
    } else {
        let size = [crop[0], crop[1], crop[2]];
        let stride = [step[0], step[1], step[2]];
        let (mut images, mut masks) = (Vec::new(), Vec::new());
        for (img, mask) in pairs {
            images.extend(crops(&img.view(), size, stride)?);
            masks.extend(crops(&mask.view(), size, stride)?);
        }
        Ok(Box::new(ChunkDataset::new(images, masks, augment)?))
    }
}

fn path_list(s: &Settings, key: &str) -> Result<Vec<PathBuf>, CliError> {
    s.get_list::<String>(key)?.iter().map(|p| existing(p)).collect()
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut defaults = TRAIN_DEFAULTS.to_vec();
    defaults.extend_from_slice(AUGMENT_DEFAULTS);
    let ctx = Context::resolve(
        &a.common,
        &defaults,
        &[
            ("train.arch", o(&a.arch)),
            ("train.scale", o(&a.scale)),
            ("train.inputs", joined(&a.input)),
            ("train.golds", joined(&a.gold)),
            ("train.epochs", o(&a.epochs)),
            ("train.learning_rate", o(&a.learning_rate)),
            ("train.batch_size", o(&a.batch_size)),
            ("train.optimizer", o(&a.optimizer)),
            ("augment.enabled", a.no_augment.then(|| "false".to_string())),
        ],
    )?;
    let s = &ctx.settings;
    let (spec, paper) = arch_spec(s)?;
    let dims = spec.dims;
    let optimizer: OptimizerKind = s.get("train.optimizer")?;
    let cfg = TrainConfig {
        learning_rate: s.get_opt("train.learning_rate")?.unwrap_or(if paper { 1e-4 } else { 2e-3 }),
        epochs: s.get("train.epochs")?,
        batch_size: s.get_opt("train.batch_size")?.unwrap_or(if dims == 2 { 4 } else { 2 }),
        optimizer,
        loss: LossKind::Bce,
        seed: ctx.seed,
    };
    cfg.validate()?;
    let (crop_default, step_default) = match (paper, dims) {
        (true, 2) => (vec![288, 288], vec![256, 256]),
        (true, _) => (vec![64; 3], vec![32; 3]),
        (false, 2) => (vec![64, 64], vec![64, 64]),
        (false, _) => (vec![16, 32, 32], vec![8, 16, 16]),
    };
    let crop = sized_list(s, "train.crop", dims, crop_default)?;
    let step = sized_list(s, "train.step", dims, step_default)?;
    if let Some(c) = crop.iter().find(|&&c| c % spec.size_multiple() != 0) {
        return Err(CliError::Usage(format!("crop extent {c} is not a multiple of {}", spec.size_multiple())));
    }
    let inputs = path_list(s, "train.inputs")?;
    let golds = path_list(s, "train.golds")?;
    if inputs.is_empty() || inputs.len() != golds.len() {
        return Err(CliError::Usage(format!("need matching inputs and golds, got {} and {}", inputs.len(), golds.len())));
    }
    let val_inputs = path_list(s, "train.val_inputs")?;
    let val_golds = path_list(s, "train.val_golds")?;
    if val_inputs.len() != val_golds.len() {
        return Err(CliError::Usage("validation inputs and golds differ in number".into()));
    }
    let augment = augment_config(s, ctx.seed)?;
    ctx.log_settings("train");

    let pairs: Vec<_> = inputs.iter().zip(&golds).map(|(i, g)| load_pair(i, g, s)).collect::<Result<_, _>>()?;
    let data = build_dataset(&pairs, dims, &crop, &step, augment)?;
    let val = if val_inputs.is_empty() {
        None
    } else {
        let vp: Vec<_> = val_inputs.iter().zip(&val_golds).map(|(i, g)| load_pair(i, g, s)).collect::<Result<_, _>>()?;
        Some(build_dataset(&vp, dims, &crop, &step, AugmentConfig::none())?)
    };
    log::info!("{} training items of {crop:?}", data.len());
    let mut net = build(&spec, ctx.seed)?;
    let start = Instant::now();
    let history = ctx.install(|| {
        train_with(&mut net.net, data.as_ref(), val.as_deref(), &cfg, |r| {
            log::debug!("step {} epoch {} loss {:.5} accuracy {:.5}", r.step, r.epoch, r.loss, r.accuracy)
        })
    })??;
    for e in &history.epochs {
        log::info!("epoch {} loss {:.5} accuracy {:.5}", e.epoch, e.loss, e.accuracy);
    }
    log::info!("trained in {:.1} s", start.elapsed().as_secs_f64());
    let last = history.final_epoch().cloned();
    let summary = json!({
        "arch": spec.arch_id(),
        "spec": spec,
        "parameters": net.parameter_count(),
        "items": data.len(),
        "config": cfg,
        "final_loss": last.as_ref().map(|e| e.loss),
        "final_accuracy": last.as_ref().map(|e| e.accuracy),
        "final_val_loss": last.as_ref().and_then(|e| e.val_loss),
        "final_val_accuracy": last.as_ref().and_then(|e| e.val_accuracy),
    });
    let st = Staging::new(&ctx.out)?;
    save_weights(&net, &st.path("weights.fsegnet"), Some(summary.clone()))?;
    st.write_with("history.csv", |w| history.write_csv(w))?;
    st.write_json("train.json", &summary)?;
    st.commit("train", s, summary)?;
    Ok(())
}

const PREDICT_DEFAULTS: &[(&str, &str)] = &[
    ("predict.arch", "auto"),
    ("predict.weights", ""),
    ("predict.input", ""),
    ("predict.tile", "auto"),
    ("predict.stride", "auto"),
    ("predict.threshold", "0.5"),
    ("predict.batch_size", "auto"),
    ("predict.auto_pad", "true"),
    ("predict.binary", "false"),
    ("predict.label", "false"),
    ("predict.wusem", "false"),
    ("predict.wusem_initial_radius", "0"),
    ("predict.wusem_delta_radius", "2"),
    ("predict.mask_format", "raw"),
];

#[derive(Serialize)]
struct LabelRow {
    z: Option<usize>,
    label: u32,
    voxels: u64,
    centroid: Vec<f64>,
    equivalent_radius_um: f64,
}

fn write_label_csv(rows: &[LabelRow], dims: usize, w: &mut Vec<u8>) -> std::io::Result<()> {
    if dims == 3 {
        writeln!(w, "label,voxels,centroid_z,centroid_y,centroid_x,equivalent_radius_um")?;
    } else {
        writeln!(w, "z,label,voxels,centroid_y,centroid_x,equivalent_radius_um")?;
    }
    for r in rows {
        if let Some(z) = r.z {
            write!(w, "{z},")?;
        }
        write!(w, "{},{}", r.label, r.voxels)?;
        for c in &r.centroid {
            write!(w, ",{c:.4}")?;
        }
        writeln!(w, ",{:.4}", r.equivalent_radius_um)?;
    }
    Ok(())
}

/// Per-slice rows for a stack of independently labelled slices.
fn slice_label_rows(labels: &Array3<u32>, zs: &[usize], spacing: f64) -> Vec<LabelRow> {
    let mut rows = Vec::new();
    for (k, &z) in zs.iter().enumerate() {
        for st in fiber_stats(&labels.index_axis(Axis(0), k), spacing) {
            rows.push(LabelRow {
                z: Some(z),
                label: st.label,
                voxels: st.voxels,
                centroid: st.centroid,
                equivalent_radius_um: st.equivalent_radius,
            });
        }
    }
    rows
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(
        &a.common,
        PREDICT_DEFAULTS,
        &[
            ("predict.arch", o(&a.arch)),
            ("predict.weights", o(&a.weights)),
            ("predict.input", o(&a.input)),
            ("predict.threshold", o(&a.threshold)),
            ("predict.binary", on(a.binary)),
            ("predict.label", on(a.label)),
            ("predict.wusem", on(a.wusem)),
            ("predict.tile", o(&a.tile)),
            ("predict.stride", o(&a.stride)),
            ("predict.batch_size", o(&a.batch_size)),
        ],
    )?;
    let s = &ctx.settings;
    let weights = input_path(s, "predict.weights")?;
    let input = input_path(s, "predict.input")?;
    let threshold: f32 = s.get("predict.threshold")?;
    let binary = s.get_bool("predict.binary")?;
    let label = s.get_bool("predict.label")?;
    let wusem = s.get_bool("predict.wusem")?;
    let mask_format = stack_format(s, "predict.mask_format")?;
    let net = load_weights(&weights, None)?;
    if let Some(expected) = s.get_opt::<String>("predict.arch")? {
        ArchSpec::parse_id(&expected)?;
        if expected != net.spec.arch_id() {
            return Err(CliError::Domain(format!(
                "ArchMismatch: {} holds {}, expected {expected}",
                weights.display(),
                net.spec.arch_id()
            )));
        }
    }
    let dims = net.spec.dims;
    let defaults = if dims == 2 { PredictConfig::default_2d() } else { PredictConfig::default_3d() };
    let tile = sized_list(s, "predict.tile", dims, defaults.tile.tile.clone())?;
    let stride = sized_list(s, "predict.stride", dims, defaults.tile.stride.clone())?;
    let cfg = PredictConfig {
        tile: TileSpec::new(&tile, &stride)?,
        threshold,
        batch_size: s.get_opt("predict.batch_size")?.unwrap_or(defaults.batch_size),
        workers: ctx.workers,
        auto_pad: s.get_bool("predict.auto_pad")?,
    };
    let src = open(&input, s)?;
    ctx.log_settings("predict");

    let pred = predict_volume(src.as_ref(), &net, &cfg)?;
    let total: f64 = pred.timings.iter().map(|t| t.seconds).sum();
    log::info!("predicted {} slices in {total:.2} s", pred.timings.len());
    let spacing = src.spacing_um();
    let name = src.name().to_string();
    let st = Staging::new(&ctx.out)?;
    st.write_volume("probability.raw", &named(format!("{name}-probability"), spacing, VoxelData::F32(pred.probability.clone()))?, &VolumeFormat::Raw)?;
    st.write_with("timing.csv", |w| pred.write_timing_csv(w))?;
    let mut details = json!({ "arch": net.spec.arch_id(), "slices": pred.timings.len(), "threshold": threshold });
    if binary || label {
        let mask = pred.binary(threshold);
        if binary {
            st.write_volume(&volume_name("mask", &mask_format), &named(format!("{name}-mask"), spacing, mask_u8(&mask))?, &mask_format)?;
        }
        if label {
            let (labels, rows, count) = if wusem {
                let r0 = s.get("predict.wusem_initial_radius")?;
                let dr = s.get("predict.wusem_delta_radius")?;
                let (labels, counts) = ctx.install(|| label_slices_wusem(&mask.view(), r0, dr))??;
                let zs: Vec<usize> = (0..labels.len_of(Axis(0))).collect();
                let rows = slice_label_rows(&labels, &zs, spacing);
                (labels, rows, counts.iter().sum::<usize>())
            } else {
                let inst = label_instances(&mask.view(), spacing);
                let rows = inst
                    .stats
                    .into_iter()
                    .map(|st| LabelRow { z: None, label: st.label, voxels: st.voxels, centroid: st.centroid, equivalent_radius_um: st.equivalent_radius })
                    .collect();
                (inst.labels, rows, inst.count)
            };
            st.write_volume("labels.raw", &named(format!("{name}-labels"), spacing, VoxelData::U32(labels))?, &VolumeFormat::Raw)?;
            st.write_with("labels.csv", |w| write_label_csv(&rows, if wusem { 2 } else { 3 }, w))?;
            details["labels"] = json!(count);
            log::info!("{count} fiber instances");
        }
    }
    st.commit("predict", s, details)?;
    Ok(())
}

const CLASSIC_DEFAULTS: &[(&str, &str)] = &[
    ("classic.input", ""),
    ("classic.slices", ""),
    ("classic.equalize_bins", "256"),
    ("classic.tv_weight", "0.3"),
    ("classic.tv_max_iter", "200"),
    ("classic.tv_tol", "2e-4"),
    ("classic.otsu_classes", "4"),
    ("classic.fiber_class", "auto"),
    ("classic.wusem_initial_radius", "0"),
    ("classic.wusem_delta_radius", "2"),
    ("classic.watershed_line", "true"),
    ("classic.roi", ""),
];

fn slice_range(s: &Settings, key: &str, depth: usize) -> Result<Range<usize>, CliError> {
    let v = s.str(key);
    if v.is_empty() {
        return Ok(0..depth);
    }
    let bad = || CliError::Usage(format!("`{key}` = {v:?}: expected a range such as 0..10"));
    let (lo, hi) = v.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo >= hi {
        return Err(bad());
    }
    if hi > depth {
        return Err(SegError::IndexOutOfRange { index: hi - 1, len: depth }.into());
    }
    Ok(lo..hi)
}

pub fn segment_classic(a: &ClassicArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(
        &a.common,
        CLASSIC_DEFAULTS,
        &[
            ("classic.input", o(&a.input)),
            ("classic.slices", o(&a.slices)),
            ("classic.otsu_classes", o(&a.otsu_classes)),
            ("classic.tv_weight", o(&a.tv_weight)),
        ],
    )?;
    let s = &ctx.settings;
    let roi = match s.get_list::<f64>("classic.roi")?.as_slice() {
        [] => None,
        [y, x, r] => Some(Roi { center_y: *y, center_x: *x, radius: *r }),
        other => return Err(CliError::Usage(format!("`classic.roi` needs center_y,center_x,radius, got {other:?}"))),
    };
    let params = ClassicParams {
        equalize_bins: s.get("classic.equalize_bins")?,
        tv_weight: s.get("classic.tv_weight")?,
        tv_max_iter: s.get("classic.tv_max_iter")?,
        tv_tol: s.get("classic.tv_tol")?,
        otsu_classes: s.get("classic.otsu_classes")?,
        fiber_class: s.get_opt("classic.fiber_class")?,
        wusem_initial_radius: s.get("classic.wusem_initial_radius")?,
        wusem_delta_radius: s.get("classic.wusem_delta_radius")?,
        watershed_line: s.get_bool("classic.watershed_line")?,
        roi,
    };
    params.validate()?;
    let input = input_path(s, "classic.input")?;
    let src = open(&input, s)?;
    let [depth, h, w] = src.shape();
    let zs: Vec<usize> = slice_range(s, "classic.slices", depth)?.collect();
    ctx.log_settings("segment-classic");

    let results = ctx.install(|| {
        zs.par_iter()
            .map(|&z| {
                let start = Instant::now();
                let out = run_classic(&src.read_slice(z)?.view(), &params)?;
                Ok((out, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>, SegError>>()
    })??;
    let mut labels = Array3::zeros((zs.len(), h, w));
    let mut mask = Array3::from_elem((zs.len(), h, w), false);
    let mut counts = String::from("z,count,tv_converged,thresholds\n");
    let mut timing = String::from("z,seconds\n");
    for (k, (&z, (out, secs))) in zs.iter().zip(&results).enumerate() {
        labels.index_axis_mut(Axis(0), k).assign(&out.labels);
        mask.index_axis_mut(Axis(0), k).assign(&out.mask);
        let thr: Vec<String> = out.thresholds.iter().map(|t| format!("{t:.6}")).collect();
        counts.push_str(&format!("{z},{},{},{}\n", out.count, out.tv_converged, thr.join(";")));
        timing.push_str(&format!("{z},{secs:.6}\n"));
    }
    let spacing = src.spacing_um();
    let rows = slice_label_rows(&labels, &zs, spacing);
    let per_slice: Vec<usize> = results.iter().map(|(o, _)| o.count).collect();
    let mean_count = per_slice.iter().sum::<usize>() as f64 / per_slice.len().max(1) as f64;
    log::info!("{} slices, {mean_count:.2} fibers per slice", zs.len());
    let name = src.name().to_string();
    let st = Staging::new(&ctx.out)?;
    st.write_volume("labels.raw", &named(format!("{name}-labels"), spacing, VoxelData::U32(labels))?, &VolumeFormat::Raw)?;
    st.write_volume("mask.raw", &named(format!("{name}-mask"), spacing, mask_u8(&mask))?, &VolumeFormat::Raw)?;
    st.write("counts.csv", counts)?;
    st.write("timing.csv", timing)?;
    st.write_with("labels.csv", |w| write_label_csv(&rows, 2, w))?;
    st.commit("segment-classic", s, json!({ "slices": zs, "counts": per_slice, "mean_count": mean_count }))?;
    Ok(())
}

const EVALUATE_DEFAULTS: &[(&str, &str)] = &[
    ("evaluate.pred", ""),
    ("evaluate.gold", ""),
    ("evaluate.threshold", "0.5"),
    ("evaluate.std", "sample"),
    ("evaluate.pooled_roc", "true"),
    ("evaluate.curves", "false"),
    ("evaluate.categories", "false"),
];

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(
        &a.common,
        EVALUATE_DEFAULTS,
        &[
            ("evaluate.pred", o(&a.pred)),
            ("evaluate.gold", o(&a.gold)),
            ("evaluate.threshold", o(&a.threshold)),
            ("evaluate.std", o(&a.std)),
            ("evaluate.curves", on(a.curves)),
            ("evaluate.categories", on(a.categories)),
        ],
    )?;
    let s = &ctx.settings;
    let std = match s.str("evaluate.std") {
        "sample" => StdConvention::Sample,
        "population" => StdConvention::Population,
        other => return Err(CliError::Usage(format!("`evaluate.std` = {other:?}: expected sample or population"))),
    };
    let opts = EvalOptions {
        threshold: s.get("evaluate.threshold")?,
        std,
        pooled_roc: s.get_bool("evaluate.pooled_roc")?,
        keep_curves: s.get_bool("evaluate.curves")?,
    };
    let categories = s.get_bool("evaluate.categories")?;
    let pred = open(&input_path(s, "evaluate.pred")?, s)?;
    let gold = open(&input_path(s, "evaluate.gold")?, s)?;
    ctx.log_settings("evaluate");

    let report = ctx.install(|| evaluate_stack(pred.as_ref(), gold.as_ref(), &opts))??;
    log::info!(
        "dice {:.4} +/- {:.4}, matthews {:.4} +/- {:.4} over {} slices",
        report.dice.mean,
        report.dice.std,
        report.matthews.mean,
        report.matthews.std,
        report.slices.len()
    );
    let st = Staging::new(&ctx.out)?;
    st.write_json("metrics.json", &report)?;
    st.write_with("slices.csv", |w| report.write_slice_csv(w))?;
    if opts.keep_curves {
        st.write_with("roc.csv", |w| report.write_roc_csv(w))?;
    }
    if let Some(roc) = &report.pooled {
        st.write_with("pooled_roc.csv", |w| {
            writeln!(w, "threshold,fpr,tpr")?;
            for p in &roc.points {
                writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
            }
            Ok(())
        })?;
    }
    if categories {
        let [d, h, w] = pred.shape();
        let mut cat = Array3::zeros((d, h, w));
        for z in 0..d {
            let p = threshold(&pred.read_slice(z)?.view(), opts.threshold);
            let g = gold.read_mask_slice(z)?;
            cat.index_axis_mut(Axis(0), z).assign(&category_map(&p.view(), &g.view())?);
        }
        st.write_volume("categories.raw", &named("categories", pred.spacing_um(), VoxelData::U8(cat))?, &VolumeFormat::Raw)?;
    }
    let details = json!({
        "dice_mean": report.dice.mean,
        "dice_std": report.dice.std,
        "matthews_mean": report.matthews.mean,
        "auc_mean": report.auc.mean,
        "pooled_auc": report.pooled.as_ref().map(|r| r.auc),
    });
    st.commit("evaluate", s, details)?;
    Ok(())
}

const REPORT_DEFAULTS: &[(&str, &str)] = &[("report.runs", "")];

#[derive(Debug, Default, Serialize)]
struct ReportRow {
    run: String,
    command: String,
    dice_mean: Option<f64>,
    dice_std: Option<f64>,
    dice_nonempty_mean: Option<f64>,
    matthews_mean: Option<f64>,
    matthews_std: Option<f64>,
    auc_mean: Option<f64>,
    pooled_auc: Option<f64>,
    final_loss: Option<f64>,
    final_accuracy: Option<f64>,
    mean_label_count: Option<f64>,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Domain(format!("Io: {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn timing_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(&a.common, REPORT_DEFAULTS, &[("report.runs", joined(&a.runs))])?;
    let s = &ctx.settings;
    let runs = path_list(s, "report.runs")?;
    if runs.is_empty() {
        return Err(CliError::Usage("`report.runs` is required".into()));
    }
    ctx.log_settings("report");
    let mut rows = Vec::new();
    let mut timing = String::from("run,slices,mean_seconds,std_seconds\n");
    for run in &runs {
        let manifest = read_json(&run.join("manifest.json"))?;
        let mut row = ReportRow {
            run: run.display().to_string(),
            command: manifest["command"].as_str().unwrap_or("").to_string(),
            ..Default::default()
        };
        let metrics = run.join("metrics.json");
        if metrics.exists() {
            let m = read_json(&metrics)?;
            row.dice_mean = m["dice"]["mean"].as_f64();
            row.dice_std = m["dice"]["std"].as_f64();
            row.dice_nonempty_mean = m["dice_excluding_empty"]["mean"].as_f64();
            row.matthews_mean = m["matthews"]["mean"].as_f64();
            row.matthews_std = m["matthews"]["std"].as_f64();
            row.auc_mean = m["auc"]["mean"].as_f64();
            row.pooled_auc = m["pooled"]["auc"].as_f64();
        }
        let train = run.join("train.json");
        if train.exists() {
            let t = read_json(&train)?;
            row.final_loss = t["final_loss"].as_f64();
            row.final_accuracy = t["final_accuracy"].as_f64();
        }
        row.mean_label_count = manifest["details"]["mean_count"].as_f64().or(manifest["details"]["labels"].as_f64());
        let tpath = run.join("timing.csv");
        if tpath.exists() {
            let t = timing_values(&tpath)?;
            let ms = fiberseg::metrics::mean_std(&t, StdConvention::Sample);
            timing.push_str(&format!("{},{},{:.6},{:.6}\n", row.run, t.len(), ms.mean, ms.std));
        }
        rows.push(row);
    }
    let mut csv = String::from(
        "run,command,dice_mean,dice_std,dice_nonempty_mean,matthews_mean,matthews_std,auc_mean,pooled_auc,final_loss,final_accuracy,mean_label_count\n",
    );
    for r in &rows {
        let cells = [
            r.dice_mean,
            r.dice_std,
            r.dice_nonempty_mean,
            r.matthews_mean,
            r.matthews_std,
            r.auc_mean,
            r.pooled_auc,
            r.final_loss,
            r.final_accuracy,
            r.mean_label_count,
        ];
        let cells: Vec<String> = cells.into_iter().map(cell).collect();
        csv.push_str(&format!("{},{},{}\n", r.run, r.command, cells.join(",")));
    }
    let st = Staging::new(&ctx.out)?;
    st.write("report.csv", csv)?;
    st.write_json("report.json", &rows)?;
    st.write("timing_summary.csv", timing)?;
    st.commit("report", s, json!({ "runs": rows.len() }))?;
    Ok(())
}
