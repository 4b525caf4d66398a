//! One HDF5 file per scene: `/lightfield` (f32, S x T x H x W x C) and
//! `/disparity` (f32, H x W), with `disparity_convention`, `d_max` and
//! `name` file attributes.

use std::path::Path;

use hdf5_metno::types::VarLenUnicode;
use hdf5_metno::File;
use ndarray::{Array2, Array5, Ix2, Ix5};

use crate::data::{DisparityMap, Scene, DEFAULT_D_MAX, DISPARITY_CONVENTION};
use crate::error::{Error, Result};
use crate::sensing::LightField;

pub const LIGHTFIELD_KEY: &str = "lightfield";
pub const DISPARITY_KEY: &str = "disparity";

pub(crate) fn write_str_attr(loc: &hdf5_metno::Location, name: &str, value: &str) -> hdf5_metno::Result<()> {
    let v: VarLenUnicode = value
        .parse()
        .map_err(|e| hdf5_metno::Error::from(format!("attribute {name}: {e}")))?;
    loc.new_attr::<VarLenUnicode>().create(name)?.write_scalar(&v)
}

pub(crate) fn read_str_attr(loc: &hdf5_metno::Location, name: &str) -> hdf5_metno::Result<String> {
    Ok(loc.attr(name)?.read_scalar::<VarLenUnicode>()?.as_str().to_owned())
}

pub(crate) fn has_attr(loc: &hdf5_metno::Location, name: &str) -> bool {
    loc.attr_names().map(|n| n.iter().any(|a| a == name)).unwrap_or(false)
}

/// Write a scene container. Values are stored as `f32`.
pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    let h5 = |e| Error::hdf5(path, e);
    let file = File::create(path).map_err(h5)?;
    let lf = scene.lightfield.data().mapv(|v| v as f32);
    file.new_dataset_builder()
        .with_data(&lf)
        .create(LIGHTFIELD_KEY)
        .map_err(h5)?;
    let disp = scene.disparity.data().mapv(|v| v as f32);
    file.new_dataset_builder()
        .with_data(&disp)
        .create(DISPARITY_KEY)
        .map_err(h5)?;
    write_str_attr(&file, "disparity_convention", DISPARITY_CONVENTION).map_err(h5)?;
    write_str_attr(&file, "name", &scene.name).map_err(h5)?;
    file.new_attr::<f64>()
        .create("d_max")
        .and_then(|a| a.write_scalar(&scene.d_max))
        .map_err(h5)?;
    file.flush().map_err(h5)?;
    Ok(())
}

fn missing(key: &str, path: &Path) -> Error {
    Error::MissingDataset {
        key: key.into(),
        path: path.into(),
    }
}

/// Load a scene from an HDF5 container, or from a view directory when `path`
/// is a directory.
pub fn load_scene(path: &Path) -> Result<Scene> {
    if path.is_dir() {
        return super::views::load_views_dir(path);
    }
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let h5 = |e| Error::hdf5(path, e);
    let file = File::open(path).map_err(h5)?;
    for key in [LIGHTFIELD_KEY, DISPARITY_KEY] {
        if !file.link_exists(key) {
            return Err(missing(key, path));
        }
    }
    let lf_ds = file.dataset(LIGHTFIELD_KEY).map_err(h5)?;
    if lf_ds.ndim() != 5 {
        return Err(Error::dim(format!("`{LIGHTFIELD_KEY}` has rank {}, expected 5", lf_ds.ndim())));
    }
    let disp_ds = file.dataset(DISPARITY_KEY).map_err(h5)?;
    if disp_ds.ndim() != 2 {
        return Err(Error::dim(format!("`{DISPARITY_KEY}` has rank {}, expected 2", disp_ds.ndim())));
    }
    let lf: Array5<f64> = lf_ds.read::<f32, Ix5>().map_err(h5)?.mapv(f64::from);
    let disp: Array2<f64> = disp_ds.read::<f32, Ix2>().map_err(h5)?.mapv(f64::from);
    let d_max = if has_attr(&file, "d_max") {
        file.attr("d_max").and_then(|a| a.read_scalar::<f64>()).map_err(h5)?
    } else {
        DEFAULT_D_MAX
    };
    let name = if has_attr(&file, "name") {
        read_str_attr(&file, "name").map_err(h5)?
    } else {
        stem(path)
    };
    let lightfield = LightField::new(lf).map_err(|e| keyed(LIGHTFIELD_KEY, e))?;
    lightfield.check_unit_range(LIGHTFIELD_KEY)?;
    let disparity = DisparityMap::bounded(disp, d_max).map_err(|e| keyed(DISPARITY_KEY, e))?;
    Scene::new(name, lightfield, disparity, d_max)
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::ValueRange { detail, .. } => Error::ValueRange { key: key.into(), detail },
        Error::Dimension(d) => Error::dim(format!("`{key}`: {d}")),
        other => other,
    }
}
