//! Synthetic fronto-parallel plane scenes with exact disparity.
//!
//! Plane `k` with disparity `d` appears in view `(s, t)` as its central-view
//! texture translated by `(d * (t - center_t), d * (s - center_s))`. Integer
//! disparities give exact pixel shifts; fractional ones are bilinearly
//! sampled. Planes are composited far to near (ascending disparity).
//!
//! Textures live on a canvas padded by the largest possible shift, so views
//! never sample undefined content at the frame border.

use ndarray::{Array2, Array3, Array5};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DisparityMap, Scene};
use crate::error::{Error, Result};
use crate::seed;
use crate::sensing::LightField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    RandomSmooth,
    Checker,
}

/// Half-open pixel rectangle `[y0, y1) x [x0, x1)` in central-view coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y0: i64,
    pub x0: i64,
    pub y1: i64,
    pub x1: i64,
}

impl Rect {
    /// Continuous membership: pixel `i` covers `[i - 0.5, i + 0.5)`, or
    /// `(i - 0.5, i + 0.5]` in `x` for a mirrored scene.
    fn contains(&self, y: f64, x: f64, mirrored: bool) -> bool {
        self.contains_y(y) && self.contains_x(x, mirrored)
    }

    fn contains_y(&self, y: f64) -> bool {
        y >= self.y0 as f64 - 0.5 && y < self.y1 as f64 - 0.5
    }

    fn contains_x(&self, x: f64, mirrored: bool) -> bool {
        let (lo, hi) = (self.x0 as f64 - 0.5, self.x1 as f64 - 0.5);
        if mirrored {
            x > lo && x <= hi
        } else {
            x >= lo && x < hi
        }
    }

    fn mirrored_x(&self, width: usize) -> Rect {
        let w = width as i64;
        Rect {
            y0: self.y0,
            y1: self.y1,
            x0: w - self.x1,
            x1: w - self.x0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub disparity: f64,
    /// `None` covers the whole frame at every view.
    pub extent: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub views_s: usize,
    pub views_t: usize,
    pub channels: usize,
    pub texture: TextureKind,
    pub planes: Vec<PlaneSpec>,
    pub seed: u64,
    pub d_max: f64,
    /// Render every texture mirrored in `x`.
    pub mirror_x: bool,
}

impl SynthSpec {
    /// The same scene seen through a horizontal mirror.
    pub fn mirrored_x(&self) -> SynthSpec {
        SynthSpec {
            planes: self
                .planes
                .iter()
                .map(|p| PlaneSpec {
                    disparity: p.disparity,
                    extent: p.extent.map(|r| r.mirrored_x(self.width)),
                })
                .collect(),
            mirror_x: !self.mirror_x,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::arg("synthetic scene needs positive spatial dims"));
        }
        if self.views_s.is_multiple_of(2) || self.views_t.is_multiple_of(2) {
            return Err(Error::arg("synthetic scene needs an odd angular grid"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::arg("synthetic scene needs 1 or 3 channels"));
        }
        if self.planes.is_empty() {
            return Err(Error::arg("synthetic scene needs at least one plane"));
        }
        for p in &self.planes {
            if !p.disparity.is_finite() || p.disparity.abs() > self.d_max {
                return Err(Error::ValueRange {
                    key: "disparity".into(),
                    detail: format!("plane disparity {} beyond d_max {}", p.disparity, self.d_max),
                });
            }
            if let Some(r) = p.extent {
                if r.y0 >= r.y1 || r.x0 >= r.x1 {
                    return Err(Error::arg(format!("empty plane extent {r:?}")));
                }
            }
        }
        Ok(())
    }

    fn pad(&self) -> usize {
        let reach = (self.views_s.max(self.views_t) - 1) / 2;
        (self.d_max * reach as f64).ceil() as usize + 2
    }
}

/// Per-plane texture on the padded canvas, `[y, x, c]`.
fn texture(spec: &SynthSpec, plane: usize) -> Array3<f64> {
    let pad = spec.pad();
    let (hc, wc, c) = (spec.height + 2 * pad, spec.width + 2 * pad, spec.channels);
    let mut rng = seed::rng_for(spec.seed, &[plane as u64, 0x7e47]);
    match spec.texture {
        TextureKind::Checker => {
            let colors: Vec<[f64; 2]> = (0..c)
                .map(|_| [rng.random_range(0.1..0.5), rng.random_range(0.5..0.9)])
                .collect();
            let cell = 4 + plane % 3;
            Array3::from_shape_fn((hc, wc, c), |(y, x, ch)| colors[ch][(y / cell + x / cell) % 2])
        }
        TextureKind::RandomSmooth => {
            let mut t = Array3::from_shape_fn((hc, wc, c), |_| rng.random::<f64>());
            for _ in 0..2 {
                t = box_blur(&t);
            }
            for ch in 0..c {
                let mut lane = t.slice_mut(ndarray::s![.., .., ch]);
                let lo = lane.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = lane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                lane.mapv_inplace(|v| if span > 0.0 { 0.05 + 0.9 * (v - lo) / span } else { 0.5 });
            }
            t
        }
    }
}

/// 3x3 mean filter with edge clamping.
fn box_blur(t: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = t.dim();
    let t = t.as_standard_layout();
    let src = t.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        let ys = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        for x in 0..w {
            let xs = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            for ch in 0..c {
                let mut acc = 0.0;
                for yy in ys {
                    for xx in xs {
                        acc += src[(yy * w + xx) * c + ch];
                    }
                }
                out.push(acc / 9.0);
            }
        }
    }
    Array3::from_shape_vec((h, w, c), out).expect("shape matches")
}

/// Linear interpolation taps `(i0, i1, frac)` along an axis of length `n`,
/// clamped to the border.
fn taps(v: f64, n: usize) -> (usize, usize, f64) {
    let v = v.clamp(0.0, (n - 1) as f64);
    let i0 = v.floor() as usize;
    (i0, (i0 + 1).min(n - 1), v - i0 as f64)
}

/// Far-to-near plane order (stable for equal disparities).
fn paint_order(spec: &SynthSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..spec.planes.len()).collect();
    order.sort_by(|&a, &b| spec.planes[a].disparity.total_cmp(&spec.planes[b].disparity));
    order
}

/// Render a plane-stack scene. Output values are rounded to `f32` so that
/// scenes survive a container round trip bit-exactly.
pub fn synth_scene(spec: &SynthSpec) -> Result<Scene> {
    spec.validate()?;
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let (ns, nt) = (spec.views_s, spec.views_t);
    let (cs, ct) = ((ns - 1) / 2, (nt - 1) / 2);
    let pad = spec.pad() as f64;
    let wc = (spec.width + 2 * spec.pad()) as f64;
    let textures: Vec<Array3<f64>> = (0..spec.planes.len()).map(|k| texture(spec, k)).collect();
    let order = paint_order(spec);

    let mut lf = Array5::<f64>::zeros((ns, nt, h, w, c));
    let out = lf.as_slice_mut().expect("standard layout");
    for s in 0..ns {
        for t in 0..nt {
            let (ds, dt) = (s as f64 - cs as f64, t as f64 - ct as f64);
            let view = &mut out[(s * nt + t) * h * w * c..][..h * w * c];
            for &k in &order {
                let plane = &spec.planes[k];
                let tex = textures[k].as_slice().expect("standard layout");
                let (th, tw, _) = textures[k].dim();
                // rows and columns are separable: membership and taps per axis
                let rows: Vec<Option<(usize, usize, f64)>> = (0..h)
                    .map(|y| {
                        let sy = y as f64 - plane.disparity * dt;
                        plane.extent.is_none_or(|r| r.contains_y(sy)).then(|| taps(sy + pad, th))
                    })
                    .collect();
                let cols: Vec<Option<(usize, usize, f64)>> = (0..w)
                    .map(|x| {
                        let sx = x as f64 - plane.disparity * ds;
                        let cx = if spec.mirror_x { wc - 1.0 - (sx + pad) } else { sx + pad };
                        plane
                            .extent
                            .is_none_or(|r| r.contains_x(sx, spec.mirror_x))
                            .then(|| taps(cx, tw))
                    })
                    .collect();
                for (y, row) in rows.iter().enumerate() {
                    let Some((y0, y1, fy)) = *row else { continue };
                    let (r0, r1) = (&tex[y0 * tw * c..][..tw * c], &tex[y1 * tw * c..][..tw * c]);
                    let dst = &mut view[y * w * c..][..w * c];
                    for (x, col) in cols.iter().enumerate() {
                        let Some((x0, x1, fx)) = *col else { continue };
                        for ch in 0..c {
                            let top = r0[x0 * c + ch] * (1.0 - fx) + r0[x1 * c + ch] * fx;
                            let bot = r1[x0 * c + ch] * (1.0 - fx) + r1[x1 * c + ch] * fx;
                            dst[x * c + ch] = top * (1.0 - fy) + bot * fy;
                        }
                    }
                }
            }
        }
    }
    lf.mapv_inplace(|v| v as f32 as f64);

    let mut disp = Array2::<f64>::zeros((h, w));
    for &k in &order {
        let plane = &spec.planes[k];
        for y in 0..h {
            for x in 0..w {
                if plane.extent.is_none_or(|r| r.contains(y as f64, x as f64, spec.mirror_x)) {
                    disp[[y, x]] = plane.disparity as f32 as f64;
                }
            }
        }
    }
    Scene::new(
        format!("synth_{:016x}", spec.seed),
        LightField::new(lf)?,
        DisparityMap::bounded(disp, spec.d_max)?,
        spec.d_max,
    )
}

/// Random scene: a full-frame background plane plus up to
/// `max_foreground` rectangles, disparities drawn from `disparities`.
#[allow(clippy::too_many_arguments)]
pub fn random_scene_spec(
    height: usize,
    width: usize,
    views: usize,
    channels: usize,
    disparities: &[f64],
    max_foreground: usize,
    texture: TextureKind,
    seed_: u64,
) -> SynthSpec {
    let mut rng = seed::rng_for(seed_, &[0x5ce7e]);
    let pick = |rng: &mut rand_chacha::ChaCha8Rng| disparities[rng.random_range(0..disparities.len())];
    let mut planes = vec![PlaneSpec {
        disparity: pick(&mut rng),
        extent: None,
    }];
    let n_fg = if max_foreground == 0 { 0 } else { rng.random_range(0..=max_foreground) };
    for _ in 0..n_fg {
        let rh = rng.random_range((height / 4).max(1)..=(3 * height / 4).max(1)) as i64;
        let rw = rng.random_range((width / 4).max(1)..=(3 * width / 4).max(1)) as i64;
        let y0 = rng.random_range(-(rh / 2)..=(height as i64 - rh / 2));
        let x0 = rng.random_range(-(rw / 2)..=(width as i64 - rw / 2));
        planes.push(PlaneSpec {
            disparity: pick(&mut rng),
            extent: Some(Rect {
                y0,
                x0,
                y1: y0 + rh,
                x1: x0 + rw,
            }),
        });
    }
    let d_max = disparities.iter().fold(super::DEFAULT_D_MAX, |m, d| m.max(d.abs()));
    SynthSpec {
        height,
        width,
        views_s: views,
        views_t: views,
        channels,
        texture,
        planes,
        seed: seed_,
        d_max,
        mirror_x: false,
    }
}

/// A seeded family of random scenes; scene `i` uses a seed derived from
/// `(seed, i)`, so any index can be rendered independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthDatasetSpec {
    pub height: usize,
    pub width: usize,
    pub views: usize,
    pub channels: usize,
    pub disparities: Vec<f64>,
    pub max_foreground: usize,
    pub texture: TextureKind,
    pub seed: u64,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            views: 7,
            channels: 3,
            disparities: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            max_foreground: 2,
            texture: TextureKind::RandomSmooth,
            seed: 0,
        }
    }
}

impl SynthDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.disparities.is_empty() {
            return Err(Error::arg("synthetic dataset needs at least one disparity"));
        }
        self.scene_spec(0).validate()
    }

    pub fn scene_spec(&self, index: usize) -> SynthSpec {
        random_scene_spec(
            self.height,
            self.width,
            self.views,
            self.channels,
            &self.disparities,
            self.max_foreground,
            self.texture,
            seed::derive(self.seed, &[index as u64]),
        )
    }

    pub fn scene(&self, index: usize) -> Result<Scene> {
        synth_scene(&self.scene_spec(index))
    }
}
