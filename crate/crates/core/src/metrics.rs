//! Disparity losses and error metrics.
//!
//! Everything except total variation is a mean over pixels of a function of
//! the residual `r = pred - gt`, so batch metrics are pooled over every pixel
//! of the batch rather than averaged per sample.

use ndarray::{ArrayBase, Data, Dimension, Ix2, Ix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BadPix thresholds reported as `badpix01`, `badpix03`, `badpix07`.
pub const BADPIX_THRESHOLDS: [f64; 3] = [0.01, 0.03, 0.07];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pseudo_huber: f64,
    pub mae: f64,
    pub mse: f64,
    pub badpix01: f64,
    pub badpix03: f64,
    pub badpix07: f64,
    pub tv: f64,
    pub count: usize,
}

fn residuals<'a, S, D>(
    pred: &'a ArrayBase<S, D>,
    gt: &'a ArrayBase<S, D>,
) -> Result<impl Iterator<Item = f64> + 'a>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if pred.shape() != gt.shape() {
        return Err(Error::dim(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::arg("metric over an empty array"));
    }
    Ok(pred.iter().zip(gt.iter()).map(|(p, g)| p - g))
}

#[inline]
pub fn pseudo_huber_kernel(r: f64, delta: f64) -> f64 {
    let q = r / delta;
    // q^2 / (sqrt(1 + q^2) + 1) == sqrt(1 + q^2) - 1 without cancellation
    delta * delta * (q * q) / ((1.0 + q * q).sqrt() + 1.0)
}

#[inline]
pub fn pseudo_huber_kernel_grad(r: f64, delta: f64) -> f64 {
    let q = r / delta;
    r / (1.0 + q * q).sqrt()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::arg(format!("pseudo-Huber delta must be > 0, got {delta}")));
    }
    Ok(())
}

/// Mean of `delta^2 (sqrt(1 + (r/delta)^2) - 1)`.
pub fn pseudo_huber<S, D>(pred: &ArrayBase<S, D>, gt: &ArrayBase<S, D>, delta: f64) -> Result<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    check_delta(delta)?;
    let n = pred.len() as f64;
    Ok(residuals(pred, gt)?.map(|r| pseudo_huber_kernel(r, delta)).sum::<f64>() / n)
}

pub fn mae<S, D>(pred: &ArrayBase<S, D>, gt: &ArrayBase<S, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    let n = pred.len() as f64;
    Ok(residuals(pred, gt)?.map(f64::abs).sum::<f64>() / n)
}

pub fn mse<S, D>(pred: &ArrayBase<S, D>, gt: &ArrayBase<S, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    let n = pred.len() as f64;
    Ok(residuals(pred, gt)?.map(|r| r * r).sum::<f64>() / n)
}

/// Percentage of pixels with `|r| > threshold`.
pub fn badpix<S, D>(pred: &ArrayBase<S, D>, gt: &ArrayBase<S, D>, threshold: f64) -> Result<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if !(threshold > 0.0) {
        return Err(Error::arg(format!("badpix threshold must be > 0, got {threshold}")));
    }
    let n = pred.len() as f64;
    let bad = residuals(pred, gt)?.filter(|r| r.abs() > threshold).count();
    Ok(100.0 * bad as f64 / n)
}

fn tv_sum<S: Data<Elem = f64>>(map: &ArrayBase<S, Ix2>) -> f64 {
    let (h, w) = map.dim();
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = map[[y, x]];
            if x + 1 < w {
                acc += (map[[y, x + 1]] - v).abs();
            }
            if y + 1 < h {
                acc += (map[[y + 1, x]] - v).abs();
            }
        }
    }
    acc
}

/// Anisotropic total variation with forward differences, per pixel.
pub fn total_variation<S: Data<Elem = f64>>(map: &ArrayBase<S, Ix2>) -> Result<f64> {
    let (h, w) = map.dim();
    if h < 2 || w < 2 {
        return Err(Error::dim(format!("total variation needs at least 2x2, got {h}x{w}")));
    }
    Ok(tv_sum(map) / (h * w) as f64)
}

/// Pooled metrics over a `[batch, h, w]` stack of disparity maps.
pub fn evaluate<S: Data<Elem = f64>>(
    pred: &ArrayBase<S, Ix3>,
    gt: &ArrayBase<S, Ix3>,
    delta: f64,
) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new(delta)?;
    acc.add(pred, gt)?;
    acc.finish()
}

/// Streaming form of [`evaluate`]: sums over batches, divides once.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    delta: f64,
    pixels: usize,
    samples: usize,
    ph: f64,
    abs: f64,
    sq: f64,
    bad: [usize; 3],
    tv: f64,
}

impl MetricsAccumulator {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            delta,
            pixels: 0,
            samples: 0,
            ph: 0.0,
            abs: 0.0,
            sq: 0.0,
            bad: [0; 3],
            tv: 0.0,
        })
    }

    pub fn add<S: Data<Elem = f64>>(&mut self, pred: &ArrayBase<S, Ix3>, gt: &ArrayBase<S, Ix3>) -> Result<()> {
        let (b, h, w) = pred.dim();
        if h < 2 || w < 2 {
            return Err(Error::dim(format!("maps must be at least 2x2, got {h}x{w}")));
        }
        for r in residuals(pred, gt)? {
            self.ph += pseudo_huber_kernel(r, self.delta);
            self.abs += r.abs();
            self.sq += r * r;
            for (k, t) in BADPIX_THRESHOLDS.iter().enumerate() {
                if r.abs() > *t {
                    self.bad[k] += 1;
                }
            }
        }
        for map in pred.outer_iter() {
            self.tv += tv_sum(&map);
        }
        self.pixels += pred.len();
        self.samples += b;
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.pixels == 0 {
            return Err(Error::arg("metrics over an empty batch"));
        }
        let n = self.pixels as f64;
        Ok(MetricsReport {
            pseudo_huber: self.ph / n,
            mae: self.abs / n,
            mse: self.sq / n,
            badpix01: 100.0 * self.bad[0] as f64 / n,
            badpix03: 100.0 * self.bad[1] as f64 / n,
            badpix07: 100.0 * self.bad[2] as f64 / n,
            tv: self.tv / n,
            count: self.samples,
        })
    }
}
