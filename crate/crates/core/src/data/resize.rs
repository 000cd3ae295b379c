use serde::{Deserialize, Serialize};

use super::layout::DatasetKind;
use super::mask::Mask;
use crate::autodiff::{NdArray, Real};
use crate::error::Result;

/// Working width for HRF images.
pub const HRF_WIDTH: usize = 1024;
/// Working width for LES-AV images fed to a RITE-trained model.
pub const LES_AV_WIDTH: usize = 576;

/// Original and working resolution of one image, as `(height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub original: (usize, usize),
    pub working: (usize, usize),
}

impl ResizeSpec {
    pub fn identity(h: usize, w: usize) -> Self {
        ResizeSpec { original: (h, w), working: (h, w) }
    }

    pub fn is_identity(&self) -> bool {
        self.original == self.working
    }

    /// Brings an `[C,h,w]` working-resolution array back to the original size.
    pub fn restore<T: Real>(&self, x: &NdArray<T>) -> Result<NdArray<T>> {
        resize_bilinear(x, self.original.0, self.original.1)
    }
}

/// Scales to `target_width` preserving the aspect ratio, height rounded half up.
pub fn width_preserving_aspect(h: usize, w: usize, target_width: usize) -> (usize, usize) {
    let nh = (2 * h * target_width + w) / (2 * w);
    (nh.max(1), target_width)
}

/// Working resolution for a dataset kind.
pub fn resize_policy(kind: DatasetKind, h: usize, w: usize) -> ResizeSpec {
    let working = match kind {
        DatasetKind::Hrf => width_preserving_aspect(h, w, HRF_WIDTH),
        DatasetKind::LesAv => width_preserving_aspect(h, w, LES_AV_WIDTH),
        DatasetKind::Rite | DatasetKind::Custom => (h, w),
    };
    ResizeSpec { original: (h, w), working }
}

fn source_coord(dst: usize, scale: f64, n: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resampling of a `[C,H,W]` array with half-pixel centres.
pub fn resize_bilinear<T: Real>(x: &NdArray<T>, nh: usize, nw: usize) -> Result<NdArray<T>> {
    let (c, h, w) = x.chw()?;
    if (h, w) == (nh, nw) {
        return Ok(x.clone());
    }
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    let xs: Vec<_> = (0..nw).map(|j| source_coord(j, sx, w)).collect();
    let mut out = NdArray::zeros(&[c, nh, nw]);
    let xd = x.data();
    let od = out.data_mut();
    for ch in 0..c {
        let plane = &xd[ch * h * w..(ch + 1) * h * w];
        for i in 0..nh {
            let (y0, y1, fy) = source_coord(i, sy, h);
            for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v00 = plane[y0 * w + x0].as_f64();
                let v01 = plane[y0 * w + x1].as_f64();
                let v10 = plane[y1 * w + x0].as_f64();
                let v11 = plane[y1 * w + x1].as_f64();
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                od[ch * nh * nw + i * nw + j] = T::lit(top + (bot - top) * fy);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour resampling of a mask.
pub fn resize_nearest(m: &Mask, nh: usize, nw: usize) -> Mask {
    let (h, w) = m.dims();
    if (h, w) == (nh, nw) {
        return m.clone();
    }
    let pick = |dst: usize, n_src: usize, n_dst: usize| ((((dst as f64 + 0.5) * n_src as f64) / n_dst as f64) as usize).min(n_src - 1);
    Mask::from_fn(nh, nw, |y, x| m.get(pick(y, h, nh), pick(x, w, nw)))
}

/// Reflection of index `i` into `0..n` (edge pixel not repeated).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// The window to crop a padded array back to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub height: usize,
    pub width: usize,
}

fn next_multiple(n: usize, factor: usize) -> usize {
    n.div_ceil(factor).max(1) * factor
}

/// Reflect-pads right and bottom of a `[C,H,W]` array up to multiples of `factor`.
pub fn pad_to_multiple<T: Real>(x: &NdArray<T>, factor: usize) -> Result<(NdArray<T>, CropSpec)> {
    let (c, h, w) = x.chw()?;
    assert!(factor.is_power_of_two(), "padding factor must be a power of two");
    let (ph, pw) = (next_multiple(h, factor), next_multiple(w, factor));
    let crop = CropSpec { height: h, width: w };
    if (ph, pw) == (h, w) {
        return Ok((x.clone(), crop));
    }
    let xd = x.data();
    let out = NdArray::from_fn(&[c, ph, pw], |idx| {
        let ch = idx / (ph * pw);
        let y = reflect((idx / pw) % ph, h);
        let xx = reflect(idx % pw, w);
        xd[ch * h * w + y * w + xx]
    });
    Ok((out, crop))
}

/// Reflect-pads a mask the same way as [`pad_to_multiple`].
pub fn pad_mask(m: &Mask, factor: usize) -> Mask {
    let (h, w) = m.dims();
    let (ph, pw) = (next_multiple(h, factor), next_multiple(w, factor));
    Mask::from_fn(ph, pw, |y, x| m.get(reflect(y, h), reflect(x, w)))
}

/// Restricts padded pixels to `false`, for loss masks.
pub fn pad_mask_with_false(m: &Mask, factor: usize) -> Mask {
    let (h, w) = m.dims();
    let (ph, pw) = (next_multiple(h, factor), next_multiple(w, factor));
    Mask::from_fn(ph, pw, |y, x| y < h && x < w && m.get(y, x))
}

pub fn crop<T: Real>(x: &NdArray<T>, spec: CropSpec) -> Result<NdArray<T>> {
    let (c, h, w) = x.chw()?;
    if (h, w) == (spec.height, spec.width) {
        return Ok(x.clone());
    }
    let (ch_, cw) = (spec.height, spec.width);
    let xd = x.data();
    Ok(NdArray::from_fn(&[c, ch_, cw], |idx| {
        let ch = idx / (ch_ * cw);
        let y = (idx / cw) % ch_;
        let xx = idx % cw;
        xd[ch * h * w + y * w + xx]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_examples() {
        assert_eq!(resize_policy(DatasetKind::Rite, 584, 768).working, (584, 768));
        assert_eq!(resize_policy(DatasetKind::Hrf, 2336, 3504).working, (683, 1024));
        assert_eq!(resize_policy(DatasetKind::LesAv, 1958, 2196).working.1, 576);
        // 2336 * 1024 / 3504 = 682.67 by direct arithmetic
        assert_eq!((2336.0f64 * 1024.0 / 3504.0).round() as usize, 683);
    }

    #[test]
    fn restore_returns_original_dims() {
        let spec = resize_policy(DatasetKind::Hrf, 30, 50);
        let x = NdArray::<f32>::full(&[2, 30, 50], 0.25);
        let small = resize_bilinear(&x, spec.working.0, spec.working.1).unwrap();
        let back = spec.restore(&small).unwrap();
        assert_eq!(back.shape(), &[2, 30, 50]);
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = NdArray::<f64>::full(&[1, 7, 9], 3.0);
        let y = resize_bilinear(&x, 4, 13).unwrap();
        assert!(y.data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn pad_examples() {
        let x = NdArray::<f32>::from_fn(&[1, 584, 3], |i| i as f32);
        let (p, spec) = pad_to_multiple(&x, 16).unwrap();
        assert_eq!(p.shape(), &[1, 592, 16]);
        assert_eq!(crop(&p, spec).unwrap(), x);

        let y = NdArray::<f32>::zeros(&[2, 32, 16]);
        assert_eq!(pad_to_multiple(&y, 16).unwrap().0, y);
    }

    #[test]
    fn reflect_does_not_repeat_edge() {
        let x = NdArray::<f32>::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (p, _) = pad_to_multiple(&x, 8).unwrap();
        assert_eq!(p.data()[..8], [1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0, 2.0]);
    }
}
