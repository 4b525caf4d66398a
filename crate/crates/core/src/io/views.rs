//! Directory layout: `view_s{ss}_t{tt}.png` per view (8- or 16-bit) and a
//! single-channel `disparity.pfm`.

use std::collections::BTreeMap;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use ndarray::{s, Array3, Array5};

use super::container::stem;
use super::pfm::{read_pfm_gray, write_pfm_gray};
use super::png::read_image;
use crate::data::{DisparityMap, Scene, DEFAULT_D_MAX};
use crate::error::{Error, Result};
use crate::sensing::LightField;

pub const DISPARITY_FILE: &str = "disparity.pfm";

pub fn view_file_name(s: usize, t: usize) -> String {
    format!("view_s{s:02}_t{t:02}.png")
}

fn parse_view_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("view_s")?.strip_suffix(".png")?;
    let (s, t) = rest.split_once("_t")?;
    Some((s.parse().ok()?, t.parse().ok()?))
}

/// Write 16-bit views and the disparity map. Radiance is quantized to 16 bits.
pub fn save_views_dir(dir: &Path, scene: &Scene) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = scene.lightfield.dims();
    let lf = scene.lightfield.data();
    let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    for s_ in 0..d.s {
        for t in 0..d.t {
            let path = dir.join(view_file_name(s_, t));
            let v = lf.slice(s![s_, t, .., .., ..]);
            let res = if d.c == 3 {
                ImageBuffer::<Rgb<u16>, Vec<u16>>::from_fn(d.w as u32, d.h as u32, |x, y| {
                    let (y, x) = (y as usize, x as usize);
                    Rgb([q(v[[y, x, 0]]), q(v[[y, x, 1]]), q(v[[y, x, 2]])])
                })
                .save(&path)
            } else {
                ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(d.w as u32, d.h as u32, |x, y| {
                    Luma([q(v[[y as usize, x as usize, 0]])])
                })
                .save(&path)
            };
            res.map_err(|e| Error::Image { path, source: e })?;
        }
    }
    write_pfm_gray(&dir.join(DISPARITY_FILE), scene.disparity.data())
}

pub fn load_views_dir(dir: &Path) -> Result<Scene> {
    let mut views: BTreeMap<(usize, usize), std::path::PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(st) = entry.file_name().to_str().and_then(parse_view_name) {
            views.insert(st, entry.path());
        }
    }
    if views.is_empty() {
        return Err(Error::MissingDataset {
            key: "view_s00_t00.png".into(),
            path: dir.into(),
        });
    }
    let ns = views.keys().map(|k| k.0).max().unwrap_or(0) + 1;
    let nt = views.keys().map(|k| k.1).max().unwrap_or(0) + 1;
    let mut first: Option<Array3<f64>> = None;
    let mut lf: Option<Array5<f64>> = None;
    for s_ in 0..ns {
        for t in 0..nt {
            let path = views.get(&(s_, t)).ok_or_else(|| Error::MissingDataset {
                key: view_file_name(s_, t),
                path: dir.into(),
            })?;
            let img = read_image(path)?;
            let (h, w, c) = img.dim();
            let buf = lf.get_or_insert_with(|| Array5::zeros((ns, nt, h, w, c)));
            if first.as_ref().is_some_and(|f| f.dim() != img.dim()) {
                return Err(Error::dim(format!(
                    "{} is {h}x{w}x{c}, other views differ",
                    path.display()
                )));
            }
            buf.slice_mut(s![s_, t, .., .., ..]).assign(&img);
            first.get_or_insert(img);
        }
    }
    let lf = LightField::new(lf.expect("at least one view"))?;
    let disp_path = dir.join(DISPARITY_FILE);
    if !disp_path.exists() {
        return Err(Error::MissingDataset {
            key: DISPARITY_FILE.into(),
            path: dir.into(),
        });
    }
    let disp = DisparityMap::bounded(read_pfm_gray(&disp_path)?, DEFAULT_D_MAX)?;
    Scene::new(stem(dir), lf, disp, DEFAULT_D_MAX)
}
