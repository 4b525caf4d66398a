//! Command implementations.

mod dataset;
mod evaluate;
mod figures;
mod training;

use std::path::{Path, PathBuf};

use codedlf::data::{extract_patches, split_dataset, PatchRecord, Scene, SplitRatios};
use codedlf::io::{load_scene, Manifest, Split};
use codedlf::sensing::ShearGeometry;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::{Cli, RunConfig};

pub use dataset::{ingest, synth_data, IngestArgs, SynthArgs, TextureArg, MANIFEST};
pub use evaluate::{
    eval, infer, parse_range, EvalArgs, InferArgs, DISPARITY_PFM, DISPARITY_PNG, DISPARITY_RANGE, EVAL_COLUMNS,
    MEASUREMENT_PNG, METRICS_FILE, PER_SCENE_FILE, SCENE_COLUMNS,
};
pub use figures::{export_mask, plot, ExportMaskArgs, PlotArgs, MASK_PNG, MASK_TEXT, PANEL_DIR};
pub use training::{seed_dir, train, TrainArgs, BEST_CHECKPOINT, LAST_CHECKPOINT, REPORT, TRAIN_CONFIG};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Invocation record for commands without a run config.
pub(crate) fn write_invocation(cli: &Cli) -> Result<()> {
    create_dir(&cli.out)?;
    let text = toml::to_string(cli).map_err(|e| CliError::config("document", e.to_string()))?;
    write_text(&cli.out.join(RESOLVED_CONFIG), &text)
}

pub(crate) fn load_config(cli: &Cli) -> Result<Option<RunConfig>> {
    cli.config.as_deref().map(RunConfig::load).transpose()
}

/// Split labels for `n` items; too few items to fill every part go to train.
pub(crate) fn assign_splits(n: usize, ratios: &SplitRatios, seed: u64) -> Result<Vec<Split>> {
    ratios.validate()?;
    let mut labels = vec![Split::Train; n];
    if ratios.counts(n).is_err() {
        return Ok(labels);
    }
    let parts = split_dataset((0..n).collect(), ratios, seed)?;
    for i in parts.val {
        labels[i] = Split::Val;
    }
    for i in parts.test {
        labels[i] = Split::Test;
    }
    Ok(labels)
}

pub(crate) fn ratios(val: f64, test: f64) -> Result<SplitRatios> {
    let r = SplitRatios {
        train: 1.0 - val - test,
        val,
        test,
    };
    if !(r.train >= 0.0) {
        return Err(CliError::usage(format!("val ({val}) and test ({test}) ratios exceed 1")));
    }
    r.validate()?;
    Ok(r)
}

pub(crate) fn check_geometry(scene: &Scene, geom: &ShearGeometry, path: &Path) -> Result<()> {
    let d = scene.lightfield.dims();
    if (d.s, d.t) != (geom.num_views_s, geom.num_views_t) {
        return Err(CliError::usage(format!(
            "geometry mismatch: {} has {}x{} views, checkpoint expects {}x{}",
            path.display(),
            d.s,
            d.t,
            geom.num_views_s,
            geom.num_views_t
        )));
    }
    Ok(())
}

/// Patches of one split, grouped per scene in manifest order.
pub(crate) struct SplitPatches {
    pub scenes: Vec<(String, PathBuf)>,
    /// `ranges[i]` indexes `patches` for scene `i`.
    pub ranges: Vec<std::ops::Range<usize>>,
    pub patches: Vec<PatchRecord>,
}

pub(crate) fn split_patches(
    manifest: &Manifest,
    split: Split,
    patch: usize,
    stride: usize,
    geom: Option<&ShearGeometry>,
) -> Result<SplitPatches> {
    let mut out = SplitPatches {
        scenes: Vec::new(),
        ranges: Vec::new(),
        patches: Vec::new(),
    };
    for path in manifest.paths(split) {
        let scene = load_scene(&path)?;
        if let Some(g) = geom {
            check_geometry(&scene, g, &path)?;
        }
        let start = out.patches.len();
        out.patches.extend(extract_patches(&scene, patch, stride)?);
        out.ranges.push(start..out.patches.len());
        out.scenes.push((scene.name, path));
    }
    Ok(out)
}

/// `(v - lo) / (hi - lo)`, or mid-gray for a constant image.
pub(crate) fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

pub(crate) fn extrema<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}
