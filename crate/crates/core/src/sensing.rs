//! Coded-mask sensing operator.
//!
//! A light field with `S x T` angular views is modulated view by view by a
//! periodic attenuation mask and summed onto a single sensor image. The mask
//! seen by view `(s, t)` is the tiled mask circularly shifted by
//! `shear_px * (t - center_t)` rows and `shear_px * (s - center_s)` columns,
//! so the operator is a horizontal stack of `S * T` diagonal blocks.
//!
//! Besides [`forward_project`] this module provides the exact adjoint, an
//! explicit dense matrix for small instances, and the gradient of a linear
//! functional of the measurement with respect to the mask tile.

use ndarray::{Array2, Array3, Array5, ArrayView3, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Shape of a light field: angular `s x t`, spatial `h x w`, `c` channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LfDims {
    pub s: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

/// Discrete light field indexed `[s, t, y, x, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    data: Array5<f64>,
}

impl LightField {
    pub fn new(data: Array5<f64>) -> Result<Self> {
        let (s, t, h, w, c) = data.dim();
        if s == 0 || t == 0 || h == 0 || w == 0 {
            return Err(Error::dim(format!(
                "light field dims must be positive, got {s}x{t}x{h}x{w}"
            )));
        }
        if c != 1 && c != 3 {
            return Err(Error::dim(format!("light field must have 1 or 3 channels, got {c}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ValueRange {
                key: "lightfield".into(),
                detail: "non-finite radiance".into(),
            });
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self { data })
    }

    pub fn zeros(dims: LfDims) -> Self {
        Self {
            data: Array5::zeros((dims.s, dims.t, dims.h, dims.w, dims.c)),
        }
    }

    pub fn dims(&self) -> LfDims {
        let (s, t, h, w, c) = self.data.dim();
        LfDims { s, t, h, w, c }
    }

    pub fn data(&self) -> &Array5<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array5<f64> {
        self.data
    }

    /// One angular view as `[y, x, c]`.
    pub fn view(&self, s: usize, t: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(Axis(0), s).index_axis_move(Axis(0), t)
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Validate radiance range for ingested scenes.
    pub fn check_unit_range(&self, key: &str) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueRange {
                key: key.into(),
                detail: format!("radiance {v} outside [0, 1]"),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &LightField) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Angular layout plus the integer mask shift per unit angular offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearGeometry {
    pub num_views_s: usize,
    pub num_views_t: usize,
    pub shear_px: usize,
}

impl ShearGeometry {
    pub fn new(num_views_s: usize, num_views_t: usize, shear_px: usize) -> Result<Self> {
        let g = Self {
            num_views_s,
            num_views_t,
            shear_px,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_views_s.is_multiple_of(2) || self.num_views_t.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "angular grid {}x{} must have odd sides so the reference view is integral",
                self.num_views_s, self.num_views_t
            )));
        }
        Ok(())
    }

    pub fn center_s(&self) -> usize {
        (self.num_views_s - 1) / 2
    }

    pub fn center_t(&self) -> usize {
        (self.num_views_t - 1) / 2
    }

    pub fn num_views(&self) -> usize {
        self.num_views_s * self.num_views_t
    }

    /// Row and column shift of the mask for view `(s, t)`.
    pub fn shift(&self, s: usize, t: usize) -> (i64, i64) {
        let k = self.shear_px as i64;
        (
            k * (t as i64 - self.center_t() as i64),
            k * (s as i64 - self.center_s() as i64),
        )
    }

    fn check_index(&self, s: usize, t: usize) -> Result<()> {
        if s >= self.num_views_s || t >= self.num_views_t {
            return Err(Error::AngularIndex {
                s,
                t,
                num_s: self.num_views_s,
                num_t: self.num_views_t,
            });
        }
        Ok(())
    }

    fn check_dims(&self, dims: LfDims) -> Result<()> {
        if dims.s != self.num_views_s || dims.t != self.num_views_t {
            return Err(Error::dim(format!(
                "light field has {}x{} views, geometry expects {}x{}",
                dims.s, dims.t, self.num_views_s, self.num_views_t
            )));
        }
        Ok(())
    }
}

impl Default for ShearGeometry {
    fn default() -> Self {
        Self {
            num_views_s: 7,
            num_views_t: 7,
            shear_px: 1,
        }
    }
}

/// Square attenuation tile with entries in `[0, 1]`, repeated across the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedMask {
    tile: Array2<f64>,
}

impl CodedMask {
    pub fn new(tile: Array2<f64>) -> Result<Self> {
        let (r, c) = tile.dim();
        if r == 0 || r != c {
            return Err(Error::InvalidMask(format!("tile must be square and non-empty, got {r}x{c}")));
        }
        let m = Self { tile };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.tile.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidMask(format!("entry {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn tile(&self) -> &Array2<f64> {
        &self.tile
    }

    pub fn tile_size(&self) -> usize {
        self.tile.nrows()
    }

    /// Apply `update` to the raw tile, then clamp back into the box.
    pub fn update_projected(&mut self, update: impl FnOnce(&mut Array2<f64>)) {
        update(&mut self.tile);
        self.tile.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
}

/// Compressed snapshot `[y, x, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    data: Array3<f64>,
}

impl Measurement {
    pub fn new(data: Array3<f64>) -> Self {
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Self { data }
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn dot(&self, other: &Measurement) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

/// Additive sensor noise; `kind = None` keeps the operator exactly linear.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::arg(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Same model with the seed replaced by a derived per-sample stream.
    pub fn reseeded(&self, keys: &[u64]) -> Self {
        Self {
            seed: seed::derive(self.seed, keys),
            ..*self
        }
    }
}

/// Periodic extension of the tile to an `h x w` sensor mask.
pub fn tile_mask(mask: &CodedMask, h: usize, w: usize) -> Result<Array2<f64>> {
    let p = mask.tile_size();
    if h == 0 || w == 0 || !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(Error::dim(format!("mask tile {p} does not divide sensor {h}x{w}")));
    }
    let tile = mask.tile();
    Ok(Array2::from_shape_fn((h, w), |(y, x)| tile[[y % p, x % p]]))
}

/// Mask seen by view `(s, t)`: the full mask circularly shifted by the shear.
pub fn view_mask(
    full_mask: &Array2<f64>,
    geom: &ShearGeometry,
    s: usize,
    t: usize,
) -> Result<Array2<f64>> {
    geom.check_index(s, t)?;
    let (h, w) = full_mask.dim();
    let (dy, dx) = geom.shift(s, t);
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        full_mask[[wrap(y, dy, h), wrap(x, dx, w)]]
    }))
}

#[inline]
fn wrap(i: usize, shift: i64, n: usize) -> usize {
    (i as i64 + shift).rem_euclid(n as i64) as usize
}

/// Source row/column of the shifted mask for each sensor row/column of a view.
fn shifted_indices(shift: i64, n: usize) -> Vec<usize> {
    (0..n).map(|i| wrap(i, shift, n)).collect()
}

fn check_mask(mask: &CodedMask, dims: LfDims) -> Result<Array2<f64>> {
    mask.validate()?;
    tile_mask(mask, dims.h, dims.w)
}

/// `out[y,x,c] = sum_{s,t} view_mask(s,t)[y,x] * lf[s,t,y,x,c] + noise`.
pub fn forward_project(
    lf: &LightField,
    mask: &CodedMask,
    geom: &ShearGeometry,
    noise: &NoiseModel,
) -> Result<Measurement> {
    let dims = lf.dims();
    geom.check_dims(dims)?;
    let full = check_mask(mask, dims)?;
    let LfDims { s: ns, t: nt, h, w, c } = dims;
    let src = lf.as_slice();
    let mut out = vec![0.0; h * w * c];
    for s in 0..ns {
        for t in 0..nt {
            let (dy, dx) = geom.shift(s, t);
            let rows = shifted_indices(dy, h);
            let cols = shifted_indices(dx, w);
            let view = &src[(s * nt + t) * h * w * c..][..h * w * c];
            for y in 0..h {
                let mrow = full.row(rows[y]);
                for x in 0..w {
                    let m = mrow[cols[x]];
                    let o = (y * w + x) * c;
                    for ch in 0..c {
                        out[o + ch] += m * view[o + ch];
                    }
                }
            }
        }
    }
    let meas = Measurement::new(Array3::from_shape_vec((h, w, c), out).expect("shape"));
    add_noise(&meas, noise)
}

/// Transpose of [`forward_project`] (noise-free).
pub fn adjoint_project(meas: &Measurement, mask: &CodedMask, geom: &ShearGeometry) -> Result<LightField> {
    let (h, w, c) = meas.data().dim();
    let dims = LfDims {
        s: geom.num_views_s,
        t: geom.num_views_t,
        h,
        w,
        c,
    };
    let full = check_mask(mask, dims)?;
    let g = meas.data().as_slice().expect("standard layout");
    let mut out = vec![0.0; dims.s * dims.t * h * w * c];
    for s in 0..dims.s {
        for t in 0..dims.t {
            let (dy, dx) = geom.shift(s, t);
            let rows = shifted_indices(dy, h);
            let cols = shifted_indices(dx, w);
            let view = &mut out[(s * dims.t + t) * h * w * c..][..h * w * c];
            for y in 0..h {
                let mrow = full.row(rows[y]);
                for x in 0..w {
                    let m = mrow[cols[x]];
                    let o = (y * w + x) * c;
                    for ch in 0..c {
                        view[o + ch] = m * g[o + ch];
                    }
                }
            }
        }
    }
    LightField::new(Array5::from_shape_vec((dims.s, dims.t, h, w, c), out).expect("shape"))
}

/// Column budget for [`build_dense_operator`].
pub const DENSE_MAX_COLUMNS: usize = 1 << 16;

/// Explicit single-channel sensing matrix `[h*w, s*t*h*w]`.
///
/// Columns are ordered view-major (`s`, then `t`), then row-major spatial;
/// each `h*w` block is diagonal with the flattened view mask on its diagonal.
pub fn build_dense_operator(
    mask: &CodedMask,
    geom: &ShearGeometry,
    h: usize,
    w: usize,
) -> Result<Array2<f64>> {
    let m = h * w;
    let n = geom.num_views() * m;
    if n > DENSE_MAX_COLUMNS {
        return Err(Error::TooLarge(format!(
            "{n} columns exceeds the limit of {DENSE_MAX_COLUMNS}"
        )));
    }
    let full = tile_mask(mask, h, w)?;
    let mut op = Array2::zeros((m, n));
    for s in 0..geom.num_views_s {
        for t in 0..geom.num_views_t {
            let vm = view_mask(&full, geom, s, t)?;
            let block = (s * geom.num_views_t + t) * m;
            for (i, v) in vm.iter().enumerate() {
                op[[i, block + i]] = *v;
            }
        }
    }
    Ok(op)
}

/// Add the configured noise; `None` and `sigma = 0` return the input unchanged.
pub fn add_noise(meas: &Measurement, noise: &NoiseModel) -> Result<Measurement> {
    noise.validate()?;
    if noise.kind == NoiseKind::None || noise.sigma == 0.0 {
        return Ok(meas.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = seed::rng(noise.seed);
    let mut data = meas.data().clone();
    data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    Ok(Measurement::new(data))
}

/// Gradient of `<grad_meas, forward_project(lf, mask)>` with respect to the
/// `tile_size x tile_size` mask tile. All tiled and shifted copies of each
/// tile entry accumulate into it.
pub fn mask_tile_gradient(
    lf: &LightField,
    grad_meas: &Array3<f64>,
    geom: &ShearGeometry,
    tile_size: usize,
) -> Result<Array2<f64>> {
    let dims = lf.dims();
    geom.check_dims(dims)?;
    let LfDims { s: ns, t: nt, h, w, c } = dims;
    if grad_meas.dim() != (h, w, c) {
        return Err(Error::dim(format!(
            "measurement gradient {:?} does not match light field {h}x{w}x{c}",
            grad_meas.dim()
        )));
    }
    if tile_size == 0 || h % tile_size != 0 || w % tile_size != 0 {
        return Err(Error::dim(format!("mask tile {tile_size} does not divide sensor {h}x{w}")));
    }
    let g = grad_meas.as_standard_layout();
    let g = g.as_slice().expect("standard layout");
    let src = lf.as_slice();
    let p = tile_size;
    let mut tile = Array2::<f64>::zeros((p, p));
    for s in 0..ns {
        for t in 0..nt {
            let (dy, dx) = geom.shift(s, t);
            let view = &src[(s * nt + t) * h * w * c..][..h * w * c];
            for y in 0..h {
                let ty = wrap(y, dy, h) % p;
                for x in 0..w {
                    let tx = wrap(x, dx, w) % p;
                    let o = (y * w + x) * c;
                    let acc: f64 = (0..c).map(|ch| g[o + ch] * view[o + ch]).sum();
                    tile[[ty, tx]] += acc;
                }
            }
        }
    }
    Ok(tile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn random_lf(dims: LfDims, seed: u64) -> LightField {
        let mut rng = seed::rng(seed);
        LightField::new(Array5::from_shape_fn(
            (dims.s, dims.t, dims.h, dims.w, dims.c),
            |_| rng.random::<f64>(),
        ))
        .unwrap()
    }

    fn random_mask(p: usize, seed: u64) -> CodedMask {
        let mut rng = seed::rng(seed);
        CodedMask::new(Array2::from_shape_fn((p, p), |_| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn tile_expands_by_modulo() {
        let mask = CodedMask::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let full = tile_mask(&mask, 4, 4).unwrap();
        assert_eq!(full[[2, 3]], 0.0);
        assert_eq!(full[[3, 3]], 1.0);
        assert_eq!(full[[1, 2]], 0.0);
        for ((y, x), v) in full.indexed_iter() {
            assert_eq!(*v, mask.tile()[[y % 2, x % 2]]);
        }
    }

    #[test]
    fn tile_of_full_size_is_identity() {
        let mask = random_mask(8, 1);
        assert_eq!(&tile_mask(&mask, 8, 8).unwrap(), mask.tile());
    }

    #[test]
    fn tile_32_on_256_repeats_8_by_8() {
        let mask = random_mask(32, 2);
        let full = tile_mask(&mask, 256, 256).unwrap();
        for by in 0..8 {
            for bx in 0..8 {
                let block = full.slice(ndarray::s![by * 32..(by + 1) * 32, bx * 32..(bx + 1) * 32]);
                assert_eq!(block, mask.tile().view());
            }
        }
    }

    #[test]
    fn tile_rejects_indivisible_sensor() {
        let mask = random_mask(3, 3);
        assert!(matches!(tile_mask(&mask, 8, 9), Err(Error::Dimension(_))));
    }

    #[test]
    fn mask_rejects_out_of_box_entries() {
        assert!(CodedMask::new(array![[1.5]]).is_err());
        assert!(CodedMask::new(array![[-0.1]]).is_err());
        assert!(CodedMask::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn view_mask_cases() {
        let full = array![[1.0, 0.0], [0.0, 1.0]];
        let g = ShearGeometry::new(3, 3, 1).unwrap();
        assert_eq!(view_mask(&full, &g, 1, 1).unwrap(), full);
        assert_eq!(view_mask(&full, &g, 2, 1).unwrap(), array![[0.0, 1.0], [1.0, 0.0]]);
        let flat = ShearGeometry::new(3, 3, 0).unwrap();
        for s in 0..3 {
            for t in 0..3 {
                assert_eq!(view_mask(&full, &flat, s, t).unwrap(), full);
            }
        }
        assert!(matches!(view_mask(&full, &g, 3, 0), Err(Error::AngularIndex { .. })));
    }

    #[test]
    fn geometry_requires_odd_grid() {
        assert!(ShearGeometry::new(4, 3, 1).is_err());
        let g = ShearGeometry::new(7, 5, 2).unwrap();
        assert_eq!((g.center_s(), g.center_t()), (3, 2));
        assert_eq!(g.shift(0, 4), (4, -6));
    }

    #[test]
    fn forward_of_zero_is_zero() {
        let dims = LfDims { s: 3, t: 3, h: 8, w: 8, c: 3 };
        let g = ShearGeometry::new(3, 3, 1).unwrap();
        let meas = forward_project(&LightField::zeros(dims), &random_mask(4, 1), &g, &NoiseModel::none()).unwrap();
        assert!(meas.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_mask_sums_views() {
        let dims = LfDims { s: 7, t: 7, h: 8, w: 8, c: 3 };
        let g = ShearGeometry::new(7, 7, 0).unwrap();
        let lf = LightField::new(Array5::ones((7, 7, 8, 8, 3))).unwrap();
        let ones = CodedMask::new(Array2::ones((4, 4))).unwrap();
        let meas = forward_project(&lf, &ones, &g, &NoiseModel::none()).unwrap();
        assert!(meas.data().iter().all(|v| *v == 49.0));
        assert_eq!(lf.dims(), dims);
    }

    #[test]
    fn adjoint_replicates_under_unit_mask() {
        let g = ShearGeometry::new(3, 3, 0).unwrap();
        let ones = CodedMask::new(Array2::ones((2, 2))).unwrap();
        let meas = Measurement::new(Array3::from_shape_fn((4, 4, 1), |(y, x, _)| (y * 4 + x) as f64));
        let lf = adjoint_project(&meas, &ones, &g).unwrap();
        for s in 0..3 {
            for t in 0..3 {
                assert_eq!(lf.view(s, t), meas.data().view());
            }
        }
        let zero = adjoint_project(&Measurement::new(Array3::zeros((4, 4, 1))), &ones, &g).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_rejects_mismatched_geometry() {
        let dims = LfDims { s: 3, t: 3, h: 8, w: 8, c: 1 };
        let g = ShearGeometry::new(5, 3, 1).unwrap();
        assert!(forward_project(&random_lf(dims, 0), &random_mask(4, 0), &g, &NoiseModel::none()).is_err());
        let g = ShearGeometry::new(3, 3, 1).unwrap();
        assert!(forward_project(&random_lf(dims, 0), &random_mask(3, 0), &g, &NoiseModel::none()).is_err());
    }

    #[test]
    fn dense_operator_single_view_is_diagonal_mask() {
        let g = ShearGeometry::new(1, 1, 0).unwrap();
        let mask = random_mask(2, 4);
        let op = build_dense_operator(&mask, &g, 4, 4).unwrap();
        let full = tile_mask(&mask, 4, 4).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { full.as_slice().unwrap()[i] } else { 0.0 };
                assert_eq!(op[[i, j]], want);
            }
        }
    }

    #[test]
    fn dense_operator_blocks_are_diagonal() {
        let g = ShearGeometry::new(3, 3, 2).unwrap();
        let op = build_dense_operator(&random_mask(4, 5), &g, 8, 8).unwrap();
        for ((i, j), v) in op.indexed_iter() {
            if j % 64 != i {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn dense_operator_guard() {
        let g = ShearGeometry::new(7, 7, 1).unwrap();
        let mask = random_mask(32, 0);
        assert!(matches!(build_dense_operator(&mask, &g, 64, 64), Err(Error::TooLarge(_))));
    }

    #[test]
    fn noise_none_and_zero_sigma_are_identity() {
        let meas = Measurement::new(Array3::from_shape_fn((4, 4, 3), |(y, x, c)| (y + x + c) as f64 * 0.1));
        assert_eq!(add_noise(&meas, &NoiseModel::none()).unwrap(), meas);
        assert_eq!(add_noise(&meas, &NoiseModel::gaussian(0.0, 9)).unwrap(), meas);
        assert!(add_noise(&meas, &NoiseModel::gaussian(-1.0, 9)).is_err());
    }

    #[test]
    fn gaussian_noise_statistics() {
        let meas = Measurement::new(Array3::zeros((1000, 1000, 1)));
        let noisy = add_noise(&meas, &NoiseModel::gaussian(0.1, 42)).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().sum() / n;
        let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.0995..=0.1005).contains(&sd), "sample std {sd}");
        let again = add_noise(&meas, &NoiseModel::gaussian(0.1, 42)).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn mask_gradient_matches_linear_functional() {
        // The measurement is linear in the tile, so <g, H(tile) f> equals
        // <grad, tile> exactly.
        let dims = LfDims { s: 3, t: 3, h: 8, w: 8, c: 3 };
        let g = ShearGeometry::new(3, 3, 1).unwrap();
        let lf = random_lf(dims, 11);
        let mask = random_mask(4, 12);
        let mut rng = seed::rng(13);
        let gm = Array3::from_shape_fn((8, 8, 3), |_| rng.random::<f64>() - 0.5);
        let grad = mask_tile_gradient(&lf, &gm, &g, 4).unwrap();
        let meas = forward_project(&lf, &mask, &g, &NoiseModel::none()).unwrap();
        let lhs = meas.dot(&Measurement::new(gm));
        let rhs: f64 = grad.iter().zip(mask.tile().iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }
}
