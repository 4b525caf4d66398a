use ndarray::{s, Array2};

use super::Scene;
use crate::error::{Error, Result};
use crate::sensing::LightField;

/// A spatial crop of a scene keeping the full angular resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub lightfield: LightField,
    pub disparity: Array2<f64>,
    pub scene_name: String,
    /// `(y0, x0)` of the crop in scene coordinates.
    pub origin: (usize, usize),
}

impl PatchRecord {
    pub fn size(&self) -> (usize, usize) {
        self.disparity.dim()
    }
}

/// `floor((h - patch) / stride + 1) * floor((w - patch) / stride + 1)`.
pub fn patch_count(h: usize, w: usize, patch: usize, stride: usize) -> Result<usize> {
    check(h, w, patch, stride)?;
    Ok(((h - patch) / stride + 1) * ((w - patch) / stride + 1))
}

fn check(h: usize, w: usize, patch: usize, stride: usize) -> Result<()> {
    if patch == 0 || stride == 0 {
        return Err(Error::arg("patch size and stride must be positive"));
    }
    if patch > h || patch > w {
        return Err(Error::dim(format!("patch {patch} larger than scene {h}x{w}")));
    }
    Ok(())
}

/// Patches in row-major origin order.
pub fn extract_patches(scene: &Scene, patch: usize, stride: usize) -> Result<Vec<PatchRecord>> {
    let d = scene.lightfield.dims();
    check(d.h, d.w, patch, stride)?;
    let lf = scene.lightfield.data();
    let mut out = Vec::with_capacity(patch_count(d.h, d.w, patch, stride)?);
    for y0 in (0..=d.h - patch).step_by(stride) {
        for x0 in (0..=d.w - patch).step_by(stride) {
            let crop = lf.slice(s![.., .., y0..y0 + patch, x0..x0 + patch, ..]).to_owned();
            out.push(PatchRecord {
                lightfield: LightField::new(crop)?,
                disparity: scene
                    .disparity
                    .data()
                    .slice(s![y0..y0 + patch, x0..x0 + patch])
                    .to_owned(),
                scene_name: scene.name.clone(),
                origin: (y0, x0),
            });
        }
    }
    Ok(out)
}
