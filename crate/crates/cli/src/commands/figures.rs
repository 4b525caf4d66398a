use std::path::PathBuf;

use clap::Args;
use codedlf::io::{format_mask_text, load_scene, write_gray16, write_rgb8, Manifest};
use codedlf::sensing::tile_mask;
use codedlf::train::{self, Checkpoint};
use ndarray::{s, Array2, Array3};
use serde::Serialize;

use super::evaluate::measurement_preview;
use super::{check_geometry, create_dir, extrema, normalize, write_invocation, write_text, SplitArg};
use crate::error::{CliError, Result};
use crate::Cli;

pub const MASK_TEXT: &str = "mask_tile.txt";
pub const MASK_PNG: &str = "mask_tiled.png";
pub const PANEL_DIR: &str = "panels";

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExportMaskArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Height of the tiled mask image.
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Width of the tiled mask image.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
}

pub fn export_mask(cli: &Cli, args: &ExportMaskArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let tiled = tile_mask(ckpt.mask(), args.height, args.width)?;
    write_invocation(cli)?;
    write_text(&cli.out.join(MASK_TEXT), &format_mask_text(ckpt.mask().tile()))?;
    write_gray16(&cli.out.join(MASK_PNG), &tiled)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenes to plot; alternatively `--manifest` with `--split`.
    pub scenes: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

fn paste_gray(dst: &mut Array3<f64>, x0: usize, img: &Array2<f64>) {
    let (h, w) = img.dim();
    for c in 0..3 {
        dst.slice_mut(s![..h, x0..x0 + w, c]).assign(img);
    }
}

/// One row: ground truth, prediction (shared range), tiled mask, measurement.
fn panel(gt: &Array2<f64>, pred: &Array2<f64>, mask: &Array2<f64>, meas: &Array3<f64>) -> Array3<f64> {
    let (h, w) = gt.dim();
    let (lo, hi) = extrema(gt.iter().chain(pred.iter()));
    let mut out = Array3::<f64>::zeros((h, 4 * w, 3));
    paste_gray(&mut out, 0, &gt.mapv(|v| normalize(v, lo, hi)));
    paste_gray(&mut out, w, &pred.mapv(|v| normalize(v, lo, hi)));
    paste_gray(&mut out, 2 * w, mask);
    for c in 0..3 {
        let src = meas.slice(s![.., .., c.min(meas.dim().2 - 1)]);
        out.slice_mut(s![.., 3 * w..4 * w, c]).assign(&src);
    }
    out
}

pub fn plot(cli: &Cli, args: &PlotArgs) -> Result<()> {
    let mut scenes = args.scenes.clone();
    if let Some(m) = &args.manifest {
        scenes.extend(Manifest::load(m)?.paths(args.split.into()));
    }
    if scenes.is_empty() {
        return Err(CliError::usage("plot needs scenes or a manifest split with entries"));
    }
    for p in &scenes {
        if !p.exists() {
            return Err(CliError::usage(format!("scene {} does not exist", p.display())));
        }
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    write_invocation(cli)?;
    let dir = cli.out.join(PANEL_DIR);
    create_dir(&dir)?;
    for (i, path) in scenes.iter().enumerate() {
        let scene = load_scene(path)?;
        check_geometry(&scene, &ckpt.config.geometry, path)?;
        let (meas, map) = train::infer(&ckpt, &scene.lightfield)?;
        let (h, w) = map.dim();
        let mask = tile_mask(ckpt.mask(), h, w)?;
        let img = panel(
            scene.disparity.data(),
            map.data(),
            &mask,
            &measurement_preview(&meas, ckpt.config.geometry.num_views()),
        );
        write_rgb8(&dir.join(format!("panel_{i:03}.png")), &img)?;
    }
    Ok(())
}
