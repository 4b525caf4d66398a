use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use codedlf::io::{load_scene, write_gray8, write_pfm_gray, write_rgb8, Manifest};
use codedlf::metrics::{MetricsAccumulator, MetricsReport};
use codedlf::train::{self, predict_patches, Checkpoint};
use ndarray::Array3;
use serde::Serialize;

use super::{check_geometry, extrema, load_config, normalize, split_patches, write_invocation, write_text, SplitArg};
use crate::error::{CliError, Result};
use crate::Cli;

/// Columns of `metrics.csv`.
pub const EVAL_COLUMNS: [&str; 11] = [
    "split",
    "scenes",
    "patches",
    "pseudo_huber",
    "mae",
    "mse",
    "badpix01",
    "badpix03",
    "badpix07",
    "tv",
    "inference_seconds",
];

/// Columns of `per_scene.csv`.
pub const SCENE_COLUMNS: [&str; 10] = [
    "scene",
    "path",
    "patches",
    "pseudo_huber",
    "mae",
    "mse",
    "badpix01",
    "badpix03",
    "badpix07",
    "tv",
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_SCENE_FILE: &str = "per_scene.csv";
pub const DISPARITY_PFM: &str = "disparity.pfm";
pub const DISPARITY_PNG: &str = "disparity.png";
pub const MEASUREMENT_PNG: &str = "measurement.png";
pub const DISPARITY_RANGE: &str = "disparity_range.txt";

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    pub split: SplitArg,
    /// Defaults to `data.manifest` of `--config`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Defaults to `data.patch` of `--config`, else 32.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Defaults to `data.stride` of `--config`, else 32.
    #[arg(long)]
    pub stride: Option<usize>,
}

fn metric_cells(m: &MetricsReport) -> [String; 7] {
    [m.pseudo_huber, m.mae, m.mse, m.badpix01, m.badpix03, m.badpix07, m.tv].map(|v| format!("{v:?}"))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let err = |source| CliError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.data.manifest.clone()))
        .ok_or_else(|| CliError::usage("eval needs --manifest or a config with data.manifest"))?;
    let patch = args.patch.or(cfg.as_ref().map(|c| c.data.patch)).unwrap_or(32);
    let stride = args.stride.or(cfg.as_ref().map(|c| c.data.stride)).unwrap_or(32);
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let manifest = Manifest::load(&manifest_path)?;
    let split = args.split.into();
    if manifest.paths(split).is_empty() {
        return Err(CliError::usage(format!("split `{split}` of {} is empty", manifest_path.display())));
    }
    let data = split_patches(&manifest, split, patch, stride, Some(&ckpt.config.geometry))?;
    if data.patches.is_empty() {
        return Err(CliError::usage(format!("split `{split}` yields no {patch}x{patch} patches")));
    }

    let started = Instant::now();
    let pred = predict_patches(ckpt.mask(), ckpt.params(), &ckpt.config, &data.patches)?;
    let seconds = started.elapsed().as_secs_f64();
    let (h, w) = data.patches[0].size();
    let mut gt = Array3::<f64>::zeros((data.patches.len(), h, w));
    for (mut dst, p) in gt.outer_iter_mut().zip(&data.patches) {
        dst.assign(&p.disparity);
    }
    let delta = ckpt.config.delta;
    let mut all = MetricsAccumulator::new(delta)?;
    all.add(&pred, &gt)?;
    let total = all.finish()?;

    let mut scene_rows = Vec::new();
    for ((name, path), range) in data.scenes.iter().zip(&data.ranges) {
        if range.is_empty() {
            continue;
        }
        let mut acc = MetricsAccumulator::new(delta)?;
        let sl = ndarray::s![range.clone(), .., ..];
        acc.add(&pred.slice(sl), &gt.slice(sl))?;
        let m = acc.finish()?;
        let mut row = vec![name.clone(), path.display().to_string(), range.len().to_string()];
        row.extend(metric_cells(&m));
        scene_rows.push(row);
    }
    let mut row = vec![split.to_string(), data.scenes.len().to_string(), total.count.to_string()];
    row.extend(metric_cells(&total));
    row.push(format!("{seconds:?}"));

    write_invocation(cli)?;
    write_csv(&cli.out.join(METRICS_FILE), &EVAL_COLUMNS, &[row])?;
    write_csv(&cli.out.join(PER_SCENE_FILE), &SCENE_COLUMNS, &scene_rows)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene container or view directory.
    #[arg(long)]
    pub scene: PathBuf,
}

/// Measurement preview in `[0, 1]`: the coded sum divided by the view count.
pub(crate) fn measurement_preview(meas: &codedlf::sensing::Measurement, views: usize) -> Array3<f64> {
    meas.data().mapv(|v| v / views as f64)
}

pub fn infer(cli: &Cli, args: &InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let scene = load_scene(&args.scene)?;
    check_geometry(&scene, &ckpt.config.geometry, &args.scene)?;
    let (meas, map) = train::infer(&ckpt, &scene.lightfield)?;
    // the PFM stores f32; previews and the range use the same rounded values
    let stored = map.data().mapv(|v| v as f32 as f64);
    let (lo, hi) = extrema(stored.iter());

    write_invocation(cli)?;
    write_pfm_gray(&cli.out.join(DISPARITY_PFM), &stored)?;
    write_gray8(&cli.out.join(DISPARITY_PNG), &stored.mapv(|v| normalize(v, lo, hi)))?;
    write_rgb8(
        &cli.out.join(MEASUREMENT_PNG),
        &measurement_preview(&meas, ckpt.config.geometry.num_views()),
    )?;
    write_text(&cli.out.join(DISPARITY_RANGE), &format!("min {lo:?}\nmax {hi:?}\n"))?;
    Ok(())
}

/// Parse a `disparity_range.txt` sidecar into `(min, max)`.
pub fn parse_range(text: &str) -> Option<(f64, f64)> {
    let mut lo = None;
    let mut hi = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match (it.next(), it.next().and_then(|v| v.parse::<f64>().ok())) {
            (Some("min"), Some(v)) => lo = Some(v),
            (Some("max"), Some(v)) => hi = Some(v),
            _ => {}
        }
    }
    Some((lo?, hi?))
}
