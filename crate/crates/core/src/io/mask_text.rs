//! Mask tile as plain text: `#` comment lines, then one whitespace-separated
//! row of transmittances per line. Values are written in shortest
//! round-trip form so a parse restores them exactly.

use std::fmt::Write;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn format_mask_text(tile: &Array2<f64>) -> String {
    let (p, _) = tile.dim();
    let mut out = format!("# coded mask tile {p}x{p}\n");
    for row in tile.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Parse a square tile. Range checking is left to [`crate::sensing::CodedMask`].
pub fn parse_mask_text(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse("mask text", format!("line {}: bad value {tok:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 {
        return Err(Error::parse("mask text", "no rows"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::parse("mask text", format!("expected {p} values per row, found {}", r.len())));
    }
    Ok(Array2::from_shape_vec((p, p), rows.concat()).expect("checked shape"))
}
