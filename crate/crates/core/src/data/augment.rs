//! Light-field-consistent augmentation.
//!
//! Geometric transforms act on the spatial and angular axes together so the
//! parallax of the augmented patch still matches its (spatially rearranged,
//! numerically unchanged) disparity map.

use ndarray::{Array2, Array5};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PatchRecord;
use crate::error::{Error, Result};
use crate::seed;
use crate::sensing::{LfDims, LightField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub hflip_prob: f64,
    pub rot90_prob: f64,
    pub gamma_range: [f64; 2],
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            hflip_prob: 0.5,
            rot90_prob: 0.5,
            gamma_range: [0.7, 1.4],
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// No-op augmentation.
    pub fn identity() -> Self {
        Self {
            hflip_prob: 0.0,
            rot90_prob: 0.0,
            gamma_range: [1.0, 1.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, p) in [("hflip_prob", self.hflip_prob), ("rot90_prob", self.rot90_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("{k} must be in [0, 1], got {p}")));
            }
        }
        let [lo, hi] = self.gamma_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::arg(format!("gamma_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Draws for one sample; fixed order so streams stay aligned.
#[derive(Debug, Clone, PartialEq)]
struct Draws {
    flip: bool,
    quarter_turns: usize,
    gammas: Vec<f64>,
}

fn draw(cfg: &AugmentationConfig, sample_seed: u64, channels: usize) -> Draws {
    let mut rng = seed::rng_for(cfg.seed, &[sample_seed]);
    let flip = rng.random::<f64>() < cfg.hflip_prob;
    let rot = rng.random::<f64>() < cfg.rot90_prob;
    let turns = rng.random_range(1..4usize);
    let [lo, hi] = cfg.gamma_range;
    let gammas = (0..channels)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();
    Draws {
        flip,
        quarter_turns: if rot { turns } else { 0 },
        gammas,
    }
}

/// Mirror `x` and the angular `s` axis.
pub(crate) fn hflip(rec: &PatchRecord) -> Result<PatchRecord> {
    let d = rec.lightfield.dims();
    let lf = remap(rec.lightfield.data(), |s, t, y, x| (d.s - 1 - s, t, y, d.w - 1 - x));
    let disp = Array2::from_shape_fn((d.h, d.w), |(y, x)| rec.disparity[[y, d.w - 1 - x]]);
    Ok(PatchRecord {
        lightfield: LightField::new(lf)?,
        disparity: disp,
        scene_name: rec.scene_name.clone(),
        origin: rec.origin,
    })
}

/// Copies whole pixels: output `(s, t, y, x)` reads input `src_of(s, t, y, x)`.
/// The output keeps the input shape.
fn remap(src: &Array5<f64>, src_of: impl Fn(usize, usize, usize, usize) -> (usize, usize, usize, usize)) -> Array5<f64> {
    let (ns, nt, h, w, c) = src.dim();
    let src = src.as_standard_layout();
    let flat = src.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(flat.len());
    for s in 0..ns {
        for t in 0..nt {
            for y in 0..h {
                for x in 0..w {
                    let (ss, tt, yy, xx) = src_of(s, t, y, x);
                    let i = (((ss * nt + tt) * h + yy) * w + xx) * c;
                    out.extend_from_slice(&flat[i..i + c]);
                }
            }
        }
    }
    Array5::from_shape_vec((ns, nt, h, w, c), out).expect("shape matches")
}

/// Quarter turn: `out[y][x] = in[x][n-1-y]` spatially, with view `(s', t')`
/// taken from `(c - (t' - c), c + (s' - c))`.
#[cfg(test)]
pub(crate) fn rot90(rec: &PatchRecord) -> Result<PatchRecord> {
    rotate(rec, 1)
}

/// `turns` quarter turns in one pass.
fn rotate(rec: &PatchRecord, turns: usize) -> Result<PatchRecord> {
    let d = rec.lightfield.dims();
    if d.h != d.w || d.s != d.t {
        return Err(Error::dim(format!(
            "rotation needs square spatial and angular dims, got {}x{} views of {}x{}",
            d.s, d.t, d.h, d.w
        )));
    }
    let (n, c0) = (d.h, (d.s - 1) / 2);
    let back = |mut s: usize, mut t: usize, mut y: usize, mut x: usize| {
        for _ in 0..turns % 4 {
            (s, t, y, x) = (2 * c0 - t, s, x, n - 1 - y);
        }
        (s, t, y, x)
    };
    let lf = remap(rec.lightfield.data(), back);
    let disp = Array2::from_shape_fn((n, n), |(y, x)| {
        let (_, _, yy, xx) = back(c0, c0, y, x);
        rec.disparity[[yy, xx]]
    });
    Ok(PatchRecord {
        lightfield: LightField::new(lf)?,
        disparity: disp,
        scene_name: rec.scene_name.clone(),
        origin: rec.origin,
    })
}

fn gamma(rec: &mut PatchRecord, gammas: &[f64]) -> Result<()> {
    if gammas.iter().all(|g| *g == 1.0) {
        return Ok(());
    }
    let placeholder = LightField::zeros(LfDims { s: 1, t: 1, h: 1, w: 1, c: 1 });
    let mut data = std::mem::replace(&mut rec.lightfield, placeholder).into_data();
    for px in data.as_slice_mut().expect("standard layout").chunks_exact_mut(gammas.len()) {
        for (v, &g) in px.iter_mut().zip(gammas) {
            if g != 1.0 {
                *v = if *v > 0.0 { (g * v.ln()).exp() } else { 0.0 };
            }
        }
    }
    rec.lightfield = LightField::new(data)?;
    Ok(())
}

/// Random flip, quarter-turn rotation and per-channel gamma, deterministic in
/// `(cfg.seed, sample_seed)`.
pub fn augment(rec: &PatchRecord, cfg: &AugmentationConfig, sample_seed: u64) -> Result<PatchRecord> {
    cfg.validate()?;
    let d = rec.lightfield.dims();
    if rec.disparity.dim() != (d.h, d.w) {
        return Err(Error::dim("patch disparity does not match its light field"));
    }
    let draws = draw(cfg, sample_seed, d.c);
    let mut out = if draws.flip { hflip(rec)? } else { rec.clone() };
    if draws.quarter_turns > 0 {
        out = rotate(&out, draws.quarter_turns)?;
    }
    gamma(&mut out, &draws.gammas)?;
    Ok(out)
}
