//! Network building blocks and their gradients.
//!
//! This module holds the raw kernels (convolution, pooling, normalization,
//! linear maps, dropout, vote averaging) as free functions over [`Tensor`]s;
//! [`layers`] wraps them in stateful structs that cache what their backward
//! pass needs, and [`model`] assembles those into classifiers. Everything is
//! plain `f64` and single threaded, so a forward or backward pass is a pure
//! function of its inputs.
//!
//! Activations are shaped `[N, ...]` where `N` folds the time axis into the
//! batch (`N = t_steps * batch`); only the membrane layers in [`layers`]
//! unfold it, because only they carry state from one step to the next.
//!
//! Every backward function here is checked against central finite
//! differences in the tests at the bottom.

pub mod checkpoint;
pub mod layers;
pub mod model;

use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 3x3 convolution, stride 1, zero padding 1: `[N, Ci, H, W] -> [N, Co, H, W]`.
///
/// The kernel loop runs as nine shifted row accumulations per channel pair,
/// which keeps the innermost loop a bounds-check-free slice operation.
pub fn conv3x3_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    assert_eq!(w.shape(), &[co, ci, 3, 3], "weight shape");
    assert_eq!(b.shape(), &[co], "bias shape");
    let mut out = Tensor::zeros(&[n, co, h, wd]);
    let plane = h * wd;
    let xs = x.data();
    let ws = w.data();
    let os = out.data_mut();
    for ni in 0..n {
        for coi in 0..co {
            let out_plane = &mut os[(ni * co + coi) * plane..(ni * co + coi + 1) * plane];
            out_plane.fill(b.data()[coi]);
            for cii in 0..ci {
                let in_plane = &xs[(ni * ci + cii) * plane..(ni * ci + cii + 1) * plane];
                let wbase = (coi * ci + cii) * 9;
                for ky in 0..3usize {
                    let dy = ky as isize - 1;
                    for kx in 0..3usize {
                        let dx = kx as isize - 1;
                        let wv = ws[wbase + ky * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        shifted_axpy(out_plane, in_plane, h, wd, dy, dx, wv);
                    }
                }
            }
        }
    }
    out
}

/// `out[y, x] += s * inp[y + dy, x + dx]` over the valid range.
fn shifted_axpy(out: &mut [f64], inp: &[f64], h: usize, w: usize, dy: isize, dx: isize, s: f64) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize).min(h as isize - dy) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let iy = (y as isize + dy) as usize;
        let ix = (x0 as isize + dx) as usize;
        let orow = &mut out[y * w + x0..y * w + x1];
        let irow = &inp[iy * w + ix..iy * w + ix + (x1 - x0)];
        for (o, i) in orow.iter_mut().zip(irow) {
            *o += s * i;
        }
    }
}

/// `acc += sum(a[y, x] * b[y + dy, x + dx])` over the valid range.
fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize).min(h as isize - dy) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx) as usize;
    if x0 >= x1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in y0..y1 {
        let by = (y as isize + dy) as usize;
        let bx = (x0 as isize + dx) as usize;
        let arow = &a[y * w + x0..y * w + x1];
        let brow = &b[by * w + bx..by * w + bx + (x1 - x0)];
        for (av, bv) in arow.iter().zip(brow) {
            acc += av * bv;
        }
    }
    acc
}

/// Gradients of [`conv3x3_forward`]. Accumulates into `dw` and `db`,
/// returns the input gradient.
pub fn conv3x3_backward(
    x: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    d_out.assert_shape(&[n, co, h, wd], "conv output gradient");
    let plane = h * wd;
    let mut dx_t = Tensor::zeros(x.shape());
    let xs = x.data();
    let ws = w.data();
    let gs = d_out.data();
    let dxs = dx_t.data_mut();
    let dws = dw.data_mut();
    let dbs = db.data_mut();
    for ni in 0..n {
        for coi in 0..co {
            let g_plane = &gs[(ni * co + coi) * plane..(ni * co + coi + 1) * plane];
            dbs[coi] += g_plane.iter().sum::<f64>();
            for cii in 0..ci {
                let in_plane = &xs[(ni * ci + cii) * plane..(ni * ci + cii + 1) * plane];
                let dx_plane = &mut dxs[(ni * ci + cii) * plane..(ni * ci + cii + 1) * plane];
                let wbase = (coi * ci + cii) * 9;
                for ky in 0..3usize {
                    let dy = ky as isize - 1;
                    for kx in 0..3usize {
                        let dx = kx as isize - 1;
                        // d_in picks up the transpose shift of the forward.
                        shifted_axpy(dx_plane, g_plane, h, wd, -dy, -dx, ws[wbase + ky * 3 + kx]);
                        dws[wbase + ky * 3 + kx] += shifted_dot(g_plane, in_plane, h, wd, dy, dx);
                    }
                }
            }
        }
    }
    dx_t
}

/// 2x2 max pooling with stride 2: `[N, C, H, W] -> [N, C, ceil(H/2), ceil(W/2)]`.
///
/// Odd edges are padded with negative infinity, so padding never wins the
/// max. Ties go to the first element in raster order; the returned indices
/// point at the winning input element of each output.
pub fn maxpool2_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let mut idx = vec![0usize; out.len()];
    let xs = x.data();
    let os = out.data_mut();
    for pi in 0..n * c {
        let base = pi * h * w;
        let obase = pi * ho * wo;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for yy in (oy * 2)..(oy * 2 + 2).min(h) {
                    for xx in (ox * 2)..(ox * 2 + 2).min(w) {
                        let i = base + yy * w + xx;
                        if xs[i] > best {
                            best = xs[i];
                            best_i = i;
                        }
                    }
                }
                os[obase + oy * wo + ox] = best;
                idx[obase + oy * wo + ox] = best_i;
            }
        }
    }
    (out, idx)
}

/// Routes each output gradient back to the input element that won the max.
pub fn maxpool2_backward(d_out: &Tensor, idx: &[usize], in_shape: &[usize]) -> Tensor {
    assert_eq!(d_out.len(), idx.len());
    let mut dx = Tensor::zeros(in_shape);
    let dxs = dx.data_mut();
    for (g, &i) in d_out.data().iter().zip(idx) {
        dxs[i] += g;
    }
    dx
}

/// What [`batchnorm_backward`] needs from the forward pass.
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `(N, H, W)` in training mode.
///
/// Normalization uses the biased batch variance; the running variance is
/// updated with the unbiased one so evaluation statistics are estimators of
/// the population values. A batch with fewer than two values per channel
/// has no usable variance and panics.
pub fn batchnorm_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
) -> (Tensor, BnCache) {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let m = n * h * w;
    assert!(m >= 2, "batch norm needs at least 2 values per channel, got {m}");
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    let xs = x.data();
    for ci in 0..c {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for ni in 0..n {
            let p = &xs[(ni * c + ci) * plane..(ni * c + ci + 1) * plane];
            for v in p {
                sum += v;
                sumsq += v * v;
            }
        }
        let mean = sum / m as f64;
        let var = (sumsq / m as f64 - mean * mean).max(0.0);
        let istd = 1.0 / (var + BN_EPS).sqrt();
        inv_std[ci] = istd;
        let g = gamma.data()[ci];
        let b = beta.data()[ci];
        for ni in 0..n {
            let lo = (ni * c + ci) * plane;
            for i in lo..lo + plane {
                let xh = (xs[i] - mean) * istd;
                xhat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + b;
            }
        }
        let unbiased = var * m as f64 / (m - 1) as f64;
        running_mean.data_mut()[ci] = (1.0 - BN_MOMENTUM) * running_mean.data()[ci] + BN_MOMENTUM * mean;
        running_var.data_mut()[ci] = (1.0 - BN_MOMENTUM) * running_var.data()[ci] + BN_MOMENTUM * unbiased;
    }
    (out, BnCache { xhat, inv_std })
}

/// Batch normalization with frozen running statistics.
pub fn batchnorm_forward_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let xs = x.data();
    let os = out.data_mut();
    for ci in 0..c {
        let istd = 1.0 / (running_var.data()[ci] + BN_EPS).sqrt();
        let mean = running_mean.data()[ci];
        let g = gamma.data()[ci];
        let b = beta.data()[ci];
        for ni in 0..n {
            let lo = (ni * c + ci) * plane;
            for i in lo..lo + plane {
                os[i] = g * (xs[i] - mean) * istd + b;
            }
        }
    }
    out
}

/// Gradients of [`batchnorm_forward_train`]. Accumulates into `dgamma` and
/// `dbeta`, returns the input gradient.
pub fn batchnorm_backward(
    d_out: &Tensor,
    gamma: &Tensor,
    cache: &BnCache,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let shape = cache.xhat.shape().to_vec();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let m = (n * h * w) as f64;
    let plane = h * w;
    let mut dx = Tensor::zeros(&shape);
    let gs = d_out.data();
    let xh = cache.xhat.data();
    for ci in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for ni in 0..n {
            let lo = (ni * c + ci) * plane;
            for i in lo..lo + plane {
                sum_g += gs[i];
                sum_gx += gs[i] * xh[i];
            }
        }
        dgamma.data_mut()[ci] += sum_gx;
        dbeta.data_mut()[ci] += sum_g;
        let k = gamma.data()[ci] * cache.inv_std[ci] / m;
        for ni in 0..n {
            let lo = (ni * c + ci) * plane;
            for i in lo..lo + plane {
                dx.data_mut()[i] = k * (m * gs[i] - sum_g - xh[i] * sum_gx);
            }
        }
    }
    dx
}

/// Fully connected map: `[N, Fi] x [Fo, Fi]^T + [Fo] -> [N, Fo]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, fi) = (x.shape()[0], x.shape()[1]);
    let fo = w.shape()[0];
    assert_eq!(w.shape(), &[fo, fi], "weight shape");
    let mut out = Tensor::zeros(&[n, fo]);
    let xs = x.data();
    let ws = w.data();
    let os = out.data_mut();
    for ni in 0..n {
        let xrow = &xs[ni * fi..(ni + 1) * fi];
        let orow = &mut os[ni * fo..(ni + 1) * fo];
        for (oi, o) in orow.iter_mut().enumerate() {
            let wrow = &ws[oi * fi..(oi + 1) * fi];
            let mut acc = b.data()[oi];
            for (xv, wv) in xrow.iter().zip(wrow) {
                acc += xv * wv;
            }
            *o = acc;
        }
    }
    out
}

/// Gradients of [`linear_forward`]. Accumulates into `dw` and `db`, returns
/// the input gradient.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let (n, fi) = (x.shape()[0], x.shape()[1]);
    let fo = w.shape()[0];
    d_out.assert_shape(&[n, fo], "linear output gradient");
    let mut dx = Tensor::zeros(&[n, fi]);
    let xs = x.data();
    let ws = w.data();
    let gs = d_out.data();
    let dxs = dx.data_mut();
    let dws = dw.data_mut();
    let dbs = db.data_mut();
    for ni in 0..n {
        let xrow = &xs[ni * fi..(ni + 1) * fi];
        let grow = &gs[ni * fo..(ni + 1) * fo];
        let dxrow = &mut dxs[ni * fi..(ni + 1) * fi];
        for (oi, &g) in grow.iter().enumerate() {
            dbs[oi] += g;
            let wrow = &ws[oi * fi..(oi + 1) * fi];
            let dwrow = &mut dws[oi * fi..(oi + 1) * fi];
            for i in 0..fi {
                dwrow[i] += g * xrow[i];
                dxrow[i] += g * wrow[i];
            }
        }
    }
    dx
}

/// Inverted-dropout mask: each element is `1 / (1 - p)` with probability
/// `1 - p` and `0` otherwise, so the expectation of `x * mask` is `x`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Tensor {
    assert!((0.0..1.0).contains(&p), "dropout rate {p} outside [0, 1)");
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    let mut mask = Tensor::zeros(&[len]);
    for v in mask.data_mut() {
        *v = if rng.gen::<f64>() < keep { scale } else { 0.0 };
    }
    mask
}

/// Averages `groups` contiguous columns per class: `[N, C * groups] -> [N, C]`.
pub fn voting_forward(x: &Tensor, groups: usize) -> Tensor {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    assert!(groups > 0 && f % groups == 0, "feature count {f} not divisible into groups of {groups}");
    let c = f / groups;
    let mut out = Tensor::zeros(&[n, c]);
    let xs = x.data();
    let os = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let lo = ni * f + ci * groups;
            os[ni * c + ci] = xs[lo..lo + groups].iter().sum::<f64>() / groups as f64;
        }
    }
    out
}

/// Gradient of [`voting_forward`].
pub fn voting_backward(d_out: &Tensor, groups: usize) -> Tensor {
    let (n, c) = (d_out.shape()[0], d_out.shape()[1]);
    let mut dx = Tensor::zeros(&[n, c * groups]);
    let gs = d_out.data();
    let dxs = dx.data_mut();
    let inv = 1.0 / groups as f64;
    for ni in 0..n {
        for ci in 0..c {
            let g = gs[ni * c + ci] * inv;
            let lo = ni * c * groups + ci * groups;
            for v in &mut dxs[lo..lo + groups] {
                *v = g;
            }
        }
    }
    dx
}
