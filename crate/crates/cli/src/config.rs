//! Run configuration file.
//!
//! A TOML document with six sections; every key is optional and unknown keys
//! are rejected. Defaults:
//!
//! ```toml
//! [geometry]
//! views_s = 7            # angular views along x
//! views_t = 7            # angular views along y
//! shear_px = 1           # mask shift per unit angular offset
//!
//! [mask]
//! size = 32              # tile side P
//! # init = "uniform_band" | "random_normal"; default depends on train.mode
//! seed = 0
//!
//! [network]
//! base_filters = 64
//! norm = "batch"         # or "none"
//!
//! [train]
//! mode = "e2e"           # or "cnn_fixed_mask"
//! epochs = 100
//! batch = 16
//! lr = 5e-4
//! delta = 1.0            # pseudo-Huber scale
//! seeds = [0]            # one run per seed
//!
//! [data]
//! # manifest = "data/manifest.txt"  (relative to this file)
//! patch = 32
//! stride = 32
//!
//! [data.augmentation]
//! hflip_prob = 0.5
//! rot90_prob = 0.5
//! gamma_range = [0.7, 1.4]
//!
//! [noise]
//! kind = "none"          # or "gaussian"
//! sigma = 0.0
//! ```

use std::path::{Path, PathBuf};

use codedlf::data::AugmentationConfig;
use codedlf::net::{NetworkConfig, NormKind};
use codedlf::sensing::{NoiseKind, NoiseModel, ShearGeometry};
use codedlf::train::{MaskInit, RmsProp, TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub views_s: usize,
    pub views_t: usize,
    pub shear_px: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            views_s: 7,
            views_t: 7,
            shear_px: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<MaskInit>,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            size: 32,
            init: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub base_filters: usize,
    pub norm: NormKind,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            base_filters: 64,
            norm: NormKind::Batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::E2e,
            epochs: 100,
            batch: 16,
            lr: 5e-4,
            delta: 1.0,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub patch: usize,
    pub stride: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: None,
            patch: 32,
            stride: 32,
            augmentation: AugmentationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub mask: MaskSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub noise: NoiseSection,
}

/// Dotted path of the key at byte offset `at`: the enclosing table header
/// plus the key on that line.
fn key_at(text: &str, at: usize) -> Option<String> {
    let at = at.min(text.len());
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[at..].find('\n').map_or(text.len(), |i| at + i);
    let line = text[line_start..line_end].trim();
    let header = |l: &str| l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
    if line.starts_with('[') {
        return Some(header(line));
    }
    let key = line.split('=').next()?.trim();
    if key.is_empty() {
        return None;
    }
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(header);
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .and_then(|sp| key_at(text, sp.start))
                .unwrap_or_else(|| "document".into());
            CliError::config(&key, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; a relative manifest path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(m) = cfg.data.manifest.as_mut() {
            if m.is_relative() {
                *m = path.parent().unwrap_or(Path::new(".")).join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::config("document", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        for (key, v) in [("geometry.views_s", g.views_s), ("geometry.views_t", g.views_t)] {
            if v == 0 || v % 2 == 0 {
                return Err(CliError::config(key, format!("must be a positive odd count, got {v}")));
            }
        }
        if self.mask.size == 0 {
            return Err(CliError::config("mask.size", "must be at least 1"));
        }
        if self.network.base_filters == 0 {
            return Err(CliError::config("network.base_filters", "must be at least 1"));
        }
        let t = &self.train;
        if t.batch == 0 {
            return Err(CliError::config("train.batch", "must be at least 1"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(CliError::config("train.lr", format!("must be positive, got {}", t.lr)));
        }
        if !(t.delta > 0.0 && t.delta.is_finite()) {
            return Err(CliError::config("train.delta", format!("must be positive, got {}", t.delta)));
        }
        if t.seeds.is_empty() {
            return Err(CliError::config("train.seeds", "needs at least one seed"));
        }
        let mut seen = t.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != t.seeds.len() {
            return Err(CliError::config("train.seeds", "seeds must be distinct"));
        }
        let d = &self.data;
        let m = NetworkConfig::default().spatial_multiple();
        if d.patch == 0 || !d.patch.is_multiple_of(m) {
            return Err(CliError::config("data.patch", format!("must be a positive multiple of {m}, got {}", d.patch)));
        }
        if d.stride == 0 {
            return Err(CliError::config("data.stride", "must be at least 1"));
        }
        d.augmentation
            .validate()
            .map_err(|e| CliError::config("data.augmentation", e.to_string()))?;
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(CliError::config("noise.sigma", format!("must be >= 0, got {}", self.noise.sigma)));
        }
        Ok(())
    }

    pub fn mask_init(&self) -> MaskInit {
        self.mask.init.unwrap_or(MaskInit::for_mode(self.train.mode))
    }

    /// Copy with defaults made explicit.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.mask.init = Some(self.mask_init());
        r
    }

    /// Trainer configuration for one seed of the run.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let in_channels = NetworkConfig::default().in_channels;
        let cfg = TrainConfig {
            mode: self.train.mode,
            epochs: self.train.epochs,
            batch_size: self.train.batch,
            optimizer: RmsProp {
                learning_rate: self.train.lr,
                ..RmsProp::default()
            },
            delta: self.train.delta,
            mask_init: self.mask_init(),
            mask_size: self.mask.size,
            mask_seed: self.mask.seed,
            seed,
            augmentation: AugmentationConfig {
                seed,
                ..self.data.augmentation
            },
            geometry: ShearGeometry::new(self.geometry.views_s, self.geometry.views_t, self.geometry.shear_px)?,
            network: NetworkConfig {
                in_channels,
                base_filters: self.network.base_filters,
                norm: self.network.norm,
                ..NetworkConfig::default()
            },
            noise: NoiseModel {
                kind: self.noise.kind,
                sigma: self.noise.sigma,
                seed,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
