use clap::Args;
use codedlf::io::{Manifest, Split};
use codedlf::train::{self, Checkpoint, TrainData};
use serde::Serialize;

use super::{create_dir, load_config, split_patches, write_text, RESOLVED_CONFIG};
use crate::error::{CliError, Result};
use crate::Cli;

pub const BEST_CHECKPOINT: &str = "best.h5";
pub const LAST_CHECKPOINT: &str = "last.h5";
pub const REPORT: &str = "report.csv";
pub const TRAIN_CONFIG: &str = "train_config.toml";

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

/// Output directory of one seed's run.
pub fn seed_dir(out: &std::path::Path, seed: u64) -> std::path::PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(cli)?.ok_or_else(|| CliError::usage("train needs --config"))?;
    if let Some(s) = cli.seed {
        cfg.train.seeds = vec![s];
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let manifest_path = cfg
        .data
        .manifest
        .clone()
        .ok_or_else(|| CliError::config("data.manifest", "required for training"))?;
    let resume = cli.resume.as_deref().map(Checkpoint::load).transpose()?;
    if resume.is_some() && cfg.train.seeds.len() != 1 {
        return Err(CliError::usage("--resume needs exactly one seed"));
    }
    let configs = cfg
        .train
        .seeds
        .iter()
        .map(|&s| cfg.train_config(s))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::load(&manifest_path)?;
    let geom = configs[0].geometry;
    let (patch, stride) = (cfg.data.patch, cfg.data.stride);
    let data = TrainData {
        train: split_patches(&manifest, Split::Train, patch, stride, Some(&geom))?.patches,
        val: split_patches(&manifest, Split::Val, patch, stride, Some(&geom))?.patches,
    };
    if data.train.is_empty() || data.val.is_empty() {
        return Err(CliError::usage("manifest needs non-empty train and val splits"));
    }

    create_dir(&cli.out)?;
    write_text(&cli.out.join(RESOLVED_CONFIG), &cfg.resolved().to_toml()?)?;
    let mut resume = resume;
    for tc in configs {
        let dir = seed_dir(&cli.out, tc.seed);
        create_dir(&dir)?;
        write_text(&dir.join(TRAIN_CONFIG), &tc.to_toml()?)?;
        let seed = tc.seed;
        let outcome = train::train(&tc, &data, resume.take(), |r| {
            if !args.quiet {
                eprintln!(
                    "seed {seed} epoch {} train_loss {:.6} val_mae {:.6} ({:.1}s)",
                    r.epoch, r.train_loss, r.val.mae, r.seconds
                );
            }
        })?;
        outcome.last.save(&dir.join(LAST_CHECKPOINT))?;
        if let Some(best) = &outcome.best {
            best.save(&dir.join(BEST_CHECKPOINT))?;
        }
        outcome.report.write_csv(&dir.join(REPORT))?;
    }
    Ok(())
}
