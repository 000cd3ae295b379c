//! Forward and backward numerical kernels shared by the recording tape and
//! the eager (inference) executor.
//!
//! All spatial kernels work on `[C, H, W]` row-major arrays. The 3x3
//! convolution lowers row bands of the input to column matrices so that
//! memory stays bounded on full-resolution fundus images.

use rayon::prelude::*;

use super::array::{gemm, MatRef, NdArray, Real};
use crate::error::{shape_err, Result};

/// Upper bound on elements in one im2col band buffer.
const BAND_BUDGET: usize = 1 << 22;

fn band_rows(c_in: usize, h: usize, w: usize) -> usize {
    (BAND_BUDGET / (c_in * 9 * w).max(1)).clamp(1, h.max(1))
}

fn bands(h: usize, rows: usize) -> Vec<(usize, usize)> {
    (0..h).step_by(rows).map(|y0| (y0, rows.min(h - y0))).collect()
}

pub(crate) fn check_conv3x3<T: Real>(x: &NdArray<T>, k: &NdArray<T>, b: &NdArray<T>) -> Result<()> {
    let (c_in, _, _) = x.chw()?;
    match k.shape() {
        [co, ci, 3, 3] => {
            if *ci != c_in {
                return Err(shape_err!(
                    "conv2d: input has {} channels but kernel {:?} expects {}",
                    c_in,
                    k.shape(),
                    ci
                ));
            }
            if b.shape() != [*co] {
                return Err(shape_err!("conv2d: bias {:?} does not match {} output channels", b.shape(), co));
            }
            Ok(())
        }
        s => Err(shape_err!("conv2d: kernel must be [C_out, C_in, 3, 3], got {:?}", s)),
    }
}

/// Fills `cols` (`[c_in*9, rows*w]`) with the zero-padded 3x3 neighbourhoods of rows `y0..y0+rows`.
fn im2col<T: Real>(x: &[T], c_in: usize, h: usize, w: usize, y0: usize, rows: usize, cols: &mut [T]) {
    let n = rows * w;
    for c in 0..c_in {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let base = (c * 9 + ky * 3 + kx) * n;
                for r in 0..rows {
                    let dst = &mut cols[base + r * w..base + (r + 1) * w];
                    let sy = (y0 + r + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds column gradients back to a band-local input gradient covering
/// rows `y0-1 ..= y0+rows` (clipped to the image). Returns the first row index.
fn col2im_band<T: Real>(
    cols: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    y0: usize,
    rows: usize,
) -> (usize, usize, Vec<T>) {
    let lo = y0.saturating_sub(1);
    let hi = (y0 + rows + 1).min(h);
    let span = hi - lo;
    let mut out = vec![T::zero(); c_in * span * w];
    let n = rows * w;
    for c in 0..c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let base = (c * 9 + ky * 3 + kx) * n;
                for r in 0..rows {
                    let sy = (y0 + r + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &cols[base + r * w..base + (r + 1) * w];
                    let row = (c * span + (sy as usize - lo)) * w;
                    let dst = &mut out[row..row + w];
                    match kx {
                        0 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += *s;
                            }
                        }
                        1 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
    }
    (lo, span, out)
}

/// 3x3 cross-correlation with zero padding 1 plus per-channel bias.
pub fn conv3x3_forward<T: Real>(x: &NdArray<T>, k: &NdArray<T>, b: &NdArray<T>) -> Result<NdArray<T>> {
    check_conv3x3(x, k, b)?;
    let (c_in, h, w) = x.chw()?;
    let c_out = k.shape()[0];
    let kmat = MatRef::row_major(k.data(), c_out, c_in * 9);
    let rows = band_rows(c_in, h, w);
    let band_list = bands(h, rows);
    let partial: Vec<(usize, usize, Vec<T>)> = band_list
        .par_iter()
        .map(|&(y0, rows)| {
            let n = rows * w;
            let mut cols = vec![T::zero(); c_in * 9 * n];
            im2col(x.data(), c_in, h, w, y0, rows, &mut cols);
            let mut out = vec![T::zero(); c_out * n];
            for (co, chunk) in out.chunks_mut(n).enumerate() {
                chunk.fill(b.data()[co]);
            }
            gemm(kmat, MatRef::row_major(&cols, c_in * 9, n), T::one(), &mut out, n);
            (y0, rows, out)
        })
        .collect();
    let mut out = NdArray::zeros(&[c_out, h, w]);
    let plane = h * w;
    let od = out.data_mut();
    for (y0, rows, band) in partial {
        let n = rows * w;
        for co in 0..c_out {
            od[co * plane + y0 * w..co * plane + y0 * w + n].copy_from_slice(&band[co * n..(co + 1) * n]);
        }
    }
    Ok(out)
}

/// Gradients of [`conv3x3_forward`]: `(d_input, d_kernel, d_bias)`. `d_input`
/// is skipped when `want_input` is false.
pub fn conv3x3_backward<T: Real>(
    x: &NdArray<T>,
    k: &NdArray<T>,
    d_out: &NdArray<T>,
    want_input: bool,
) -> (Option<NdArray<T>>, NdArray<T>, NdArray<T>) {
    let (c_in, h, w) = x.chw().expect("validated in forward");
    let c_out = k.shape()[0];
    let plane = h * w;
    let kmat = MatRef::row_major(k.data(), c_out, c_in * 9);
    let rows = band_rows(c_in, h, w);
    let band_list = bands(h, rows);
    let dod = d_out.data();

    let mut d_bias = NdArray::zeros(&[c_out]);
    for co in 0..c_out {
        d_bias.data_mut()[co] = dod[co * plane..(co + 1) * plane].iter().copied().sum();
    }

    let partial: Vec<(Vec<T>, Option<(usize, usize, Vec<T>)>)> = band_list
        .par_iter()
        .map(|&(y0, rows)| {
            let n = rows * w;
            let mut cols = vec![T::zero(); c_in * 9 * n];
            im2col(x.data(), c_in, h, w, y0, rows, &mut cols);
            let dmat = MatRef {
                data: &dod[y0 * w..],
                rows: c_out,
                cols: n,
                row_stride: plane,
                col_stride: 1,
            };
            let mut dk = vec![T::zero(); c_out * c_in * 9];
            gemm(dmat, MatRef::row_major(&cols, c_in * 9, n).t(), T::zero(), &mut dk, c_in * 9);
            let dx = want_input.then(|| {
                gemm(kmat.t(), dmat, T::zero(), &mut cols, n);
                col2im_band(&cols, c_in, h, w, y0, rows)
            });
            (dk, dx)
        })
        .collect();

    let mut d_kernel = NdArray::zeros(k.shape());
    let mut d_input = want_input.then(|| NdArray::zeros(&[c_in, h, w]));
    for (dk, dx) in partial {
        for (acc, v) in d_kernel.data_mut().iter_mut().zip(&dk) {
            *acc += *v;
        }
        if let (Some(di), Some((lo, span, band))) = (d_input.as_mut(), dx) {
            let did = di.data_mut();
            for c in 0..c_in {
                let dst = &mut did[c * plane + lo * w..c * plane + (lo + span) * w];
                for (d, s) in dst.iter_mut().zip(&band[c * span * w..(c + 1) * span * w]) {
                    *d += *s;
                }
            }
        }
    }
    (d_input, d_kernel, d_bias)
}

pub(crate) fn check_conv1x1<T: Real>(x: &NdArray<T>, k: &NdArray<T>, b: &NdArray<T>) -> Result<()> {
    let (c_in, _, _) = x.chw()?;
    match k.shape() {
        [co, ci] if *ci == c_in && b.shape() == [*co] => Ok(()),
        s => Err(shape_err!(
            "conv1x1: kernel {:?} / bias {:?} incompatible with {} input channels",
            s,
            b.shape(),
            c_in
        )),
    }
}

/// Pointwise (1x1) convolution: `out[co] = sum_ci k[co,ci] * x[ci] + b[co]`.
pub fn conv1x1_forward<T: Real>(x: &NdArray<T>, k: &NdArray<T>, b: &NdArray<T>) -> Result<NdArray<T>> {
    check_conv1x1(x, k, b)?;
    let (c_in, h, w) = x.chw()?;
    let c_out = k.shape()[0];
    let n = h * w;
    let mut out = NdArray::zeros(&[c_out, h, w]);
    for (co, chunk) in out.data_mut().chunks_mut(n).enumerate() {
        chunk.fill(b.data()[co]);
    }
    gemm(
        MatRef::row_major(k.data(), c_out, c_in),
        MatRef::row_major(x.data(), c_in, n),
        T::one(),
        out.data_mut(),
        n,
    );
    Ok(out)
}

pub fn conv1x1_backward<T: Real>(
    x: &NdArray<T>,
    k: &NdArray<T>,
    d_out: &NdArray<T>,
    want_input: bool,
) -> (Option<NdArray<T>>, NdArray<T>, NdArray<T>) {
    let (c_in, h, w) = x.chw().expect("validated in forward");
    let c_out = k.shape()[0];
    let n = h * w;
    let dmat = MatRef::row_major(d_out.data(), c_out, n);
    let mut d_bias = NdArray::zeros(&[c_out]);
    for co in 0..c_out {
        d_bias.data_mut()[co] = d_out.data()[co * n..(co + 1) * n].iter().copied().sum();
    }
    let mut d_kernel = NdArray::zeros(k.shape());
    gemm(dmat, MatRef::row_major(x.data(), c_in, n).t(), T::zero(), d_kernel.data_mut(), c_in);
    let d_input = want_input.then(|| {
        let mut di = NdArray::zeros(&[c_in, h, w]);
        gemm(MatRef::row_major(k.data(), c_out, c_in).t(), dmat, T::zero(), di.data_mut(), n);
        di
    });
    (d_input, d_kernel, d_bias)
}

/// 2x2 non-overlapping max pooling. Returns the pooled array and, for each
/// output element, the flat input index that won (first in scan order on ties).
pub fn max_pool2_forward<T: Real>(x: &NdArray<T>) -> Result<(NdArray<T>, Vec<usize>)> {
    let (c, h, w) = x.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("max_pool2 needs even spatial dims, got {}x{}", h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = NdArray::zeros(&[c, oh, ow]);
    let mut arg = vec![0usize; c * oh * ow];
    let xd = x.data();
    let od = out.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                let o = ch * oh * ow + oy * ow + ox;
                od[o] = xd[best];
                arg[o] = best;
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2_backward<T: Real>(input_shape: &[usize], argmax: &[usize], d_out: &NdArray<T>) -> NdArray<T> {
    let mut di = NdArray::zeros(input_shape);
    let did = di.data_mut();
    for (&src, &g) in argmax.iter().zip(d_out.data()) {
        did[src] += g;
    }
    di
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_forward<T: Real>(x: &NdArray<T>) -> Result<NdArray<T>> {
    let (c, h, w) = x.chw()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = NdArray::zeros(&[c, oh, ow]);
    let xd = x.data();
    let od = out.data_mut();
    for ch in 0..c {
        for y in 0..oh {
            let src = &xd[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            let dst = &mut od[ch * oh * ow + y * ow..ch * oh * ow + (y + 1) * ow];
            for (x2, d) in dst.iter_mut().enumerate() {
                *d = src[x2 / 2];
            }
        }
    }
    Ok(out)
}

pub fn upsample2_backward<T: Real>(input_shape: &[usize], d_out: &NdArray<T>) -> NdArray<T> {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let ow = 2 * w;
    let mut di = NdArray::zeros(input_shape);
    let dod = d_out.data();
    let did = di.data_mut();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let o = ch * 4 * h * w + 2 * y * ow + 2 * x;
                did[ch * h * w + y * w + x] = dod[o] + dod[o + 1] + dod[o + ow] + dod[o + ow + 1];
            }
        }
    }
    di
}

/// Logistic function in the overflow-free two-branch form, clamped to the
/// open interval (0, 1) at the representable extremes.
pub fn sigmoid<T: Real>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let upper = T::one() - T::epsilon() / T::lit(2.0);
    s.max(T::min_positive_value()).min(upper)
}
