//! PNG preview writers. Inputs are clamped to `[0, 1]` and quantized.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

fn q8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn q16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn img_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.into(),
        source,
    }
}

pub fn write_gray8(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([q8(img[[y as usize, x as usize]])]))
        .save(path)
        .map_err(|e| img_err(path, e))
}

pub fn write_gray16(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        Luma([q16(img[[y as usize, x as usize]])])
    })
    .save(path)
    .map_err(|e| img_err(path, e))
}

/// `[y, x, c]` with `c` in {1, 3}; gray is replicated.
pub fn write_rgb8(path: &Path, img: &Array3<f64>) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 1 && c != 3 {
        return Err(Error::dim(format!("rgb preview needs 1 or 3 channels, got {c}")));
    }
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (y, x) = (y as usize, x as usize);
        let px = |ch: usize| q8(img[[y, x, if c == 1 { 0 } else { ch }]]);
        image::Rgb([px(0), px(1), px(2)])
    })
    .save(path)
    .map_err(|e| img_err(path, e))
}

/// Decoded image as `[y, x, c]` in `[0, 1]`; gray images have one channel.
pub fn read_image(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path).map_err(|e| img_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    let sixteen = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    let out = match (gray, sixteen) {
        (true, false) => {
            let b = img.to_luma8();
            Array3::from_shape_fn((h, w, 1), |(y, x, _)| b.get_pixel(x as u32, y as u32)[0] as f64 / 255.0)
        }
        (true, true) => {
            let b = img.to_luma16();
            Array3::from_shape_fn((h, w, 1), |(y, x, _)| b.get_pixel(x as u32, y as u32)[0] as f64 / 65535.0)
        }
        (false, false) => {
            let b = img.to_rgb8();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| b.get_pixel(x as u32, y as u32)[c] as f64 / 255.0)
        }
        (false, true) => {
            let b = img.to_rgb16();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| b.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0)
        }
    };
    Ok(out)
}
