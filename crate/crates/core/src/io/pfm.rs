//! Portable float map: `Pf` (gray) or `PF` (RGB) header, width and height,
//! then a scale whose sign selects endianness (negative = little-endian).
//! Rows are stored bottom to top.

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// A decoded float map, rows top to bottom, `[y, x, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub data: Array3<f32>,
    pub scale: f32,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::parse("pfm", detail)
}

/// Splits off one whitespace-delimited header token.
fn token(buf: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("truncated header"));
    }
    std::str::from_utf8(&buf[start..*pos])
        .map(str::to_owned)
        .map_err(|_| bad("non-ascii header"))
}

pub fn decode_pfm(buf: &[u8]) -> Result<Pfm> {
    let mut pos = 0;
    let channels = match token(buf, &mut pos)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(format!("unknown magic {other:?}"))),
    };
    let dim = |tok: String| -> Result<usize> {
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(bad(format!("bad dimension {tok:?}"))),
        }
    };
    let width = dim(token(buf, &mut pos)?)?;
    let height = dim(token(buf, &mut pos)?)?;
    let scale_tok = token(buf, &mut pos)?;
    let scale: f32 = scale_tok.parse().map_err(|_| bad(format!("bad scale {scale_tok:?}")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(bad(format!("bad scale {scale}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= buf.len() || !buf[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .filter(|v| v.checked_mul(4).is_some())
        .ok_or_else(|| bad("dimensions overflow"))?;
    let raster = &buf[pos..];
    if raster.len() != n * 4 {
        return Err(bad(format!("expected {} raster bytes, found {}", n * 4, raster.len())));
    }
    let little = scale < 0.0;
    let mut data = Array3::<f32>::zeros((height, width, channels));
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let c = i % channels;
        let x = (i / channels) % width;
        let row = i / (channels * width);
        data[[height - 1 - row, x, c]] = v;
    }
    Ok(Pfm { data, scale })
}

/// Little-endian encoding with scale `-1.0`.
pub fn encode_pfm(data: &Array3<f32>) -> Result<Vec<u8>> {
    let (h, w, c) = data.dim();
    let magic = match c {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::dim(format!("pfm needs 1 or 3 channels, got {c}"))),
    };
    if h == 0 || w == 0 {
        return Err(Error::dim("pfm needs positive dimensions"));
    }
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&data[[y, x, ch]].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&buf).map_err(|e| match e {
        Error::Parse { what, detail } => Error::parse(format!("{what} {}", path.display()), detail),
        other => other,
    })
}

/// Single-channel map as `f32`.
pub fn write_pfm_gray(path: &Path, map: &Array2<f64>) -> Result<()> {
    let (h, w) = map.dim();
    let data = Array3::from_shape_fn((h, w, 1), |(y, x, _)| map[[y, x]] as f32);
    std::fs::write(path, encode_pfm(&data)?).map_err(|e| Error::io(path, e))
}

/// Load a single-channel map, widening to `f64`.
pub fn read_pfm_gray(path: &Path) -> Result<Array2<f64>> {
    let pfm = read_pfm(path)?;
    let (h, w, c) = pfm.data.dim();
    if c != 1 {
        return Err(Error::dim(format!("{} has {c} channels, expected 1", path.display())));
    }
    Ok(Array2::from_shape_fn((h, w), |(y, x)| pfm.data[[y, x, 0]] as f64))
}
