use std::path::PathBuf;

use clap::Args;
use codedlf::data::{SynthDatasetSpec, TextureKind};
use codedlf::io::{load_scene, save_scene, Manifest, ManifestEntry, Split};
use serde::Serialize;

use super::{assign_splits, create_dir, ratios, write_invocation};
use crate::error::{CliError, Result};
use crate::Cli;

pub const MANIFEST: &str = "manifest.txt";
const SCENE_DIR: &str = "scenes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureArg {
    RandomSmooth,
    Checker,
}

impl From<TextureArg> for TextureKind {
    fn from(t: TextureArg) -> Self {
        match t {
            TextureArg::RandomSmooth => TextureKind::RandomSmooth,
            TextureArg::Checker => TextureKind::Checker,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Angular views per side.
    #[arg(long, default_value_t = 7)]
    pub views: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    /// Plane disparities to draw from, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
    pub disparities: Vec<f64>,
    /// Foreground rectangles per scene, at most.
    #[arg(long, default_value_t = 2)]
    pub max_foreground: usize,
    #[arg(long, value_enum, default_value_t = TextureArg::RandomSmooth)]
    pub texture: TextureArg,
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_ratio: f64,
}

impl SynthArgs {
    pub fn dataset_spec(&self, seed: u64) -> SynthDatasetSpec {
        SynthDatasetSpec {
            height: self.height,
            width: self.width,
            views: self.views,
            channels: self.channels,
            disparities: self.disparities.clone(),
            max_foreground: self.max_foreground,
            texture: self.texture.into(),
            seed,
        }
    }

    /// Split label of every scene index, as written to the manifest.
    pub fn labels(&self, seed: u64) -> Result<Vec<Split>> {
        assign_splits(self.count, &ratios(self.val_ratio, self.test_ratio)?, seed)
    }
}

pub fn synth_data(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let spec = args.dataset_spec(seed);
    spec.validate()?;
    let labels = args.labels(seed)?;
    write_invocation(cli)?;
    let dir = cli.out.join(SCENE_DIR);
    create_dir(&dir)?;
    let mut manifest = Manifest::default();
    for (i, split) in labels.into_iter().enumerate() {
        let rel = PathBuf::from(SCENE_DIR).join(format!("scene_{i:04}.h5"));
        save_scene(&cli.out.join(&rel), &spec.scene(i)?)?;
        manifest.entries.push(ManifestEntry { split, path: rel });
    }
    manifest.save(&cli.out.join(MANIFEST))?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Scene containers or directories of view images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_ratio: f64,
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let r = ratios(args.val_ratio, args.test_ratio)?;
    for p in &args.inputs {
        if !p.exists() {
            return Err(CliError::usage(format!("input {} does not exist", p.display())));
        }
    }
    let labels = assign_splits(args.inputs.len(), &r, cli.seed.unwrap_or(0))?;
    write_invocation(cli)?;
    let dir = cli.out.join(SCENE_DIR);
    create_dir(&dir)?;
    let mut manifest = Manifest::default();
    for (i, (input, split)) in args.inputs.iter().zip(labels).enumerate() {
        let scene = load_scene(input)?;
        let rel = PathBuf::from(SCENE_DIR).join(format!("{i:04}_{}.h5", file_safe(&scene.name)));
        save_scene(&cli.out.join(&rel), &scene)?;
        manifest.entries.push(ManifestEntry { split, path: rel });
    }
    manifest.save(&cli.out.join(MANIFEST))?;
    Ok(())
}
