//! Layer kernels with explicit backward passes.
//!
//! All kernels operate on channel-major [`Act`] tensors. Convolutions use
//! zero padding and stride 1; 3x3 convolutions go through an im2col buffer
//! that is filled a few image rows at a time to bound memory on full frames.

use std::cell::RefCell;

use ndarray::{s, ArrayView2, ArrayViewMut2};

use super::tensor::{gemm, Act};

/// Upper bound on im2col buffer entries.
const COL_BUDGET: usize = 1 << 21;

pub(crate) const BN_EPS: f64 = 1e-5;

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Runs `f` with two reusable buffers of at least `len` entries. Contents are
/// stale; callers overwrite before reading.
fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (a, b) = &mut *guard;
        if a.len() < len {
            a.resize(len, 0.0);
            b.resize(len, 0.0);
        }
        f(&mut a[..len], &mut b[..len])
    })
}

fn rows_per_chunk(kk: usize, w: usize, total_rows: usize) -> usize {
    (COL_BUDGET / (kk * w).max(1)).clamp(1, total_rows.max(1))
}

/// Fill `col` (`[cin*9, (r1-r0)*w]`) for global image rows `r0..r1`, where a
/// global row is `n * h + y`.
fn im2col3(x: &Act, r0: usize, r1: usize, col: &mut [f64]) {
    let (h, w) = (x.h, x.w);
    let ncols = (r1 - r0) * w;
    for ci in 0..x.c {
        for ky in 0..3 {
            for kx in 0..3 {
                let ri = (ci * 3 + ky) * 3 + kx;
                let dst = &mut col[ri * ncols..(ri + 1) * ncols];
                for r in r0..r1 {
                    let (n, y) = (r / h, r % h);
                    let drow = &mut dst[(r - r0) * w..(r - r0 + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &x.plane(ci, n)[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            drow[0] = 0.0;
                            drow[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => drow.copy_from_slice(srow),
                        _ => {
                            drow[..w - 1].copy_from_slice(&srow[1..]);
                            drow[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: scatter-add `col` back into `dx`.
fn col2im3(dx: &mut Act, r0: usize, r1: usize, col: &[f64]) {
    let (h, w) = (dx.h, dx.w);
    let ncols = (r1 - r0) * w;
    let plane = h * w;
    let nb = dx.n;
    for ci in 0..dx.c {
        for ky in 0..3 {
            for kx in 0..3 {
                let ri = (ci * 3 + ky) * 3 + kx;
                let src = &col[ri * ncols..(ri + 1) * ncols];
                for r in r0..r1 {
                    let (n, y) = (r / h, r % h);
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let crow = &src[(r - r0) * w..(r - r0 + 1) * w];
                    let off = (ci * nb + n) * plane + sy as usize * w;
                    let drow = &mut dx.data[off..off + w];
                    match kx {
                        0 => drow[..w - 1].iter_mut().zip(&crow[1..]).for_each(|(d, c)| *d += c),
                        1 => drow.iter_mut().zip(crow).for_each(|(d, c)| *d += c),
                        _ => drow[1..].iter_mut().zip(&crow[..w - 1]).for_each(|(d, c)| *d += c),
                    }
                }
            }
        }
    }
}

/// Convolution weights `[cout, cin * k * k]` with optional bias.
pub(crate) struct ConvRef<'a> {
    pub weight: &'a [f64],
    pub bias: Option<&'a [f64]>,
    pub cout: usize,
    pub k: usize,
}

pub(crate) struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn conv_forward(x: &Act, conv: &ConvRef) -> Act {
    let kk = x.c * conv.k * conv.k;
    let wv = ArrayView2::from_shape((conv.cout, kk), conv.weight).expect("conv weight shape");
    let mut out = x.like(conv.cout);
    if conv.k == 1 {
        gemm(1.0, &wv, &x.view2(), 0.0, &mut out.view2_mut());
    } else {
        debug_assert_eq!(conv.k, 3);
        let total = x.n * x.h;
        let rpc = rows_per_chunk(kk, x.w, total);
        let cols = out.cols();
        let mut ov = ArrayViewMut2::from_shape((conv.cout, cols), &mut out.data).expect("shape");
        with_scratch(kk * rpc * x.w, |col, _| {
            for r0 in (0..total).step_by(rpc) {
                let r1 = (r0 + rpc).min(total);
                let nc = (r1 - r0) * x.w;
                let buf = &mut col[..kk * nc];
                im2col3(x, r0, r1, buf);
                let cv = ArrayView2::from_shape((kk, nc), &*buf).expect("shape");
                let mut dst = ov.slice_mut(s![.., r0 * x.w..r1 * x.w]);
                gemm(1.0, &wv, &cv, 0.0, &mut dst);
            }
        });
    }
    if let Some(b) = conv.bias {
        for (co, bv) in b.iter().enumerate() {
            out.row_mut(co).iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

/// Returns parameter gradients and, when requested, the input gradient.
pub(crate) fn conv_backward(x: &Act, conv: &ConvRef, dout: &Act, need_dx: bool) -> (ConvGrads, Option<Act>) {
    let kk = x.c * conv.k * conv.k;
    let wv = ArrayView2::from_shape((conv.cout, kk), conv.weight).expect("conv weight shape");
    let mut dw = vec![0.0; conv.cout * kk];
    let mut dx = need_dx.then(|| x.like(x.c));
    {
        let mut dwv = ArrayViewMut2::from_shape((conv.cout, kk), &mut dw).expect("shape");
        let dv = dout.view2();
        if conv.k == 1 {
            gemm(1.0, &dv, &x.view2().t(), 0.0, &mut dwv);
            if let Some(dx) = dx.as_mut() {
                gemm(1.0, &wv.t(), &dv, 0.0, &mut dx.view2_mut());
            }
        } else {
            let total = x.n * x.h;
            let rpc = rows_per_chunk(kk, x.w, total);
            with_scratch(kk * rpc * x.w, |col, dcol| {
                for r0 in (0..total).step_by(rpc) {
                    let r1 = (r0 + rpc).min(total);
                    let nc = (r1 - r0) * x.w;
                    let buf = &mut col[..kk * nc];
                    im2col3(x, r0, r1, buf);
                    let cv = ArrayView2::from_shape((kk, nc), &*buf).expect("shape");
                    let dchunk = dv.slice(s![.., r0 * x.w..r1 * x.w]);
                    gemm(1.0, &dchunk, &cv.t(), 1.0, &mut dwv);
                    if let Some(dx) = dx.as_mut() {
                        let dbuf = &mut dcol[..kk * nc];
                        {
                            let mut dcv = ArrayViewMut2::from_shape((kk, nc), &mut *dbuf).expect("shape");
                            gemm(1.0, &wv.t(), &dchunk, 0.0, &mut dcv);
                        }
                        col2im3(dx, r0, r1, dbuf);
                    }
                }
            });
        }
    }
    let db = conv
        .bias
        .map(|_| (0..conv.cout).map(|co| dout.row(co).iter().sum()).collect());
    (ConvGrads { weight: dw, bias: db }, dx)
}

/// Batch statistics kept for the backward pass and running-stat updates.
pub(crate) struct BnCache {
    pub xhat: Act,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(crate) fn bn_forward_train(x: &Act, gamma: &[f64], beta: &[f64]) -> (Act, BnCache) {
    let m = x.cols() as f64;
    let mut xhat = x.clone();
    let mut y = x.like(x.c);
    let mut inv_std = Vec::with_capacity(x.c);
    let mut means = Vec::with_capacity(x.c);
    let mut vars = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let row = x.row(c);
        let mean = row.iter().sum::<f64>() / m;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let is = 1.0 / (var + BN_EPS).sqrt();
        let (g, b) = (gamma[c], beta[c]);
        for (xh, yv) in xhat.row_mut(c).iter_mut().zip(y.row_mut(c)) {
            *xh = (*xh - mean) * is;
            *yv = g * *xh + b;
        }
        inv_std.push(is);
        means.push(mean);
        vars.push(var);
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            mean: means,
            var: vars,
        },
    )
}

pub(crate) fn bn_forward_eval(x: &Act, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64]) -> Act {
    let mut y = x.clone();
    for c in 0..x.c {
        let scale = gamma[c] / (var[c] + BN_EPS).sqrt();
        let shift = beta[c] - mean[c] * scale;
        y.row_mut(c).iter_mut().for_each(|v| *v = *v * scale + shift);
    }
    y
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn bn_backward(cache: &BnCache, gamma: &[f64], dy: &Act) -> (Act, Vec<f64>, Vec<f64>) {
    let m = dy.cols() as f64;
    let mut dx = dy.like(dy.c);
    let mut dgamma = Vec::with_capacity(dy.c);
    let mut dbeta = Vec::with_capacity(dy.c);
    for c in 0..dy.c {
        let d = dy.row(c);
        let xh = cache.xhat.row(c);
        let sb: f64 = d.iter().sum();
        let sg: f64 = d.iter().zip(xh).map(|(a, b)| a * b).sum();
        let k = gamma[c] * cache.inv_std[c] / m;
        for ((o, dv), xv) in dx.row_mut(c).iter_mut().zip(d).zip(xh) {
            *o = k * (m * dv - sb - xv * sg);
        }
        dgamma.push(sg);
        dbeta.push(sb);
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn relu_inplace(x: &mut Act) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gate `grad` by the positive part of an activation's output.
pub(crate) fn relu_backward_inplace(out: &Act, grad: &mut Act) {
    grad.data
        .iter_mut()
        .zip(&out.data)
        .for_each(|(g, o)| {
            if *o <= 0.0 {
                *g = 0.0
            }
        });
}

/// 2x2 max pooling; also returns the winning offset (0..4) per output.
pub(crate) fn maxpool2(x: &Act) -> (Act, Vec<u8>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Act::zeros(x.c, x.n, oh, ow);
    let mut arg = vec![0u8; out.data.len()];
    let planes = x.c * x.n;
    for p in 0..planes {
        let src = &x.data[p * x.h * x.w..(p + 1) * x.h * x.w];
        let dst = &mut out.data[p * oh * ow..(p + 1) * oh * ow];
        let am = &mut arg[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let base = 2 * y * x.w + 2 * xx;
                let cand = [src[base], src[base + 1], src[base + x.w], src[base + x.w + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if cand[k] > cand[best] {
                        best = k;
                    }
                }
                dst[y * ow + xx] = cand[best];
                am[y * ow + xx] = best as u8;
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(dout: &Act, arg: &[u8], h: usize, w: usize) -> Act {
    let mut dx = Act::zeros(dout.c, dout.n, h, w);
    let (oh, ow) = (dout.h, dout.w);
    for p in 0..dout.c * dout.n {
        let g = &dout.data[p * oh * ow..(p + 1) * oh * ow];
        let am = &arg[p * oh * ow..(p + 1) * oh * ow];
        let d = &mut dx.data[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let k = am[y * ow + xx] as usize;
                d[(2 * y + k / 2) * w + 2 * xx + k % 2] += g[y * ow + xx];
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub(crate) fn upsample2(x: &Act) -> Act {
    let (oh, ow) = (x.h * 2, x.w * 2);
    let mut out = Act::zeros(x.c, x.n, oh, ow);
    for p in 0..x.c * x.n {
        let src = &x.data[p * x.h * x.w..(p + 1) * x.h * x.w];
        let dst = &mut out.data[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            let srow = &src[(y / 2) * x.w..(y / 2 + 1) * x.w];
            for (xx, d) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *d = srow[xx / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(dout: &Act) -> Act {
    let (h, w) = (dout.h / 2, dout.w / 2);
    let mut dx = Act::zeros(dout.c, dout.n, h, w);
    for p in 0..dout.c * dout.n {
        let g = &dout.data[p * dout.h * dout.w..(p + 1) * dout.h * dout.w];
        let d = &mut dx.data[p * h * w..(p + 1) * h * w];
        for y in 0..dout.h {
            for xx in 0..dout.w {
                d[(y / 2) * w + xx / 2] += g[y * dout.w + xx];
            }
        }
    }
    dx
}

/// Channel concatenation `[a; b]`.
pub(crate) fn concat(a: &Act, b: &Act) -> Act {
    debug_assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Act {
        c: a.c + b.c,
        n: a.n,
        h: a.h,
        w: a.w,
        data,
    }
}

pub(crate) fn split(g: &Act, ca: usize) -> (Act, Act) {
    let at = ca * g.cols();
    let mk = |c: usize, d: &[f64]| Act {
        c,
        n: g.n,
        h: g.h,
        w: g.w,
        data: d.to_vec(),
    };
    (mk(ca, &g.data[..at]), mk(g.c - ca, &g.data[at..]))
}
