//! Scenes, patches, augmentation, synthetic scenes and dataset splits.
//!
//! Disparity is measured at the central view in pixels per unit angular
//! step. Positive disparity moves a point towards `+x` as the angular index
//! `s` increases (and towards `+y` as `t` increases); closer objects have
//! larger disparity.

mod augment;
mod patch;
mod split;
mod synth;

use ndarray::Array2;

pub use augment::{augment, AugmentationConfig};
pub use patch::{extract_patches, patch_count, PatchRecord};
pub use split::{split_dataset, SplitRatios, Splits};
pub use synth::{random_scene_spec, synth_scene, PlaneSpec, Rect, SynthDatasetSpec, SynthSpec, TextureKind};

use crate::error::{Error, Result};
use crate::sensing::LightField;

/// Convention string stored alongside every scene container.
pub const DISPARITY_CONVENTION: &str = "px per unit angular step; +x per +s, +y per +t; central view";

pub const DEFAULT_D_MAX: f64 = 4.0;

/// Central-view disparity map `[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    data: Array2<f64>,
}

impl DisparityMap {
    /// Any finite map (decoder outputs are unbounded).
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ValueRange {
                key: "disparity".into(),
                detail: "non-finite disparity".into(),
            });
        }
        Ok(Self { data })
    }

    /// Ground-truth map: finite and within `|d| <= d_max`.
    pub fn bounded(data: Array2<f64>, d_max: f64) -> Result<Self> {
        let m = Self::new(data)?;
        if let Some(v) = m.data.iter().find(|v| v.abs() > d_max) {
            return Err(Error::ValueRange {
                key: "disparity".into(),
                detail: format!("|{v}| exceeds d_max {d_max}"),
            });
        }
        Ok(m)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// A light field with its central disparity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub lightfield: LightField,
    pub disparity: DisparityMap,
    pub d_max: f64,
}

impl Scene {
    pub fn new(name: impl Into<String>, lightfield: LightField, disparity: DisparityMap, d_max: f64) -> Result<Self> {
        let d = lightfield.dims();
        if disparity.dim() != (d.h, d.w) {
            return Err(Error::dim(format!(
                "disparity {:?} does not match light field spatial {}x{}",
                disparity.dim(),
                d.h,
                d.w
            )));
        }
        Ok(Self {
            name: name.into(),
            lightfield,
            disparity,
            d_max,
        })
    }
}
