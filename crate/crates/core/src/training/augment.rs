use rand::Rng;

use super::config::AugmentationConfig;
use crate::autodiff::NdArray;
use crate::data::{FundusSample, Mask};

/// Horizontal mirror of image, ground truth and masks.
pub fn hflip(s: &FundusSample) -> FundusSample {
    let (h, w) = s.dims();
    remap(s, |y, x| Some((y, w - 1 - x)), h, w)
}

/// Vertical mirror of image, ground truth and masks.
pub fn vflip(s: &FundusSample) -> FundusSample {
    let (h, w) = s.dims();
    remap(s, |y, x| Some((h - 1 - y, x)), h, w)
}

/// Exact pixel permutation (or drop) applied to every plane of a sample.
fn remap(s: &FundusSample, src: impl Fn(usize, usize) -> Option<(usize, usize)>, h: usize, w: usize) -> FundusSample {
    let map_plane = |plane: &[f32], out: &mut [f32]| {
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = src(y, x).map_or(0.0, |(sy, sx)| plane[sy * w + sx]);
            }
        }
    };
    let map_array = |a: &NdArray<f32>| {
        let mut out = NdArray::zeros(a.shape());
        let c = a.shape()[0];
        for ch in 0..c {
            map_plane(a.channel(ch), out.channel_mut(ch));
        }
        out
    };
    let map_mask = |m: &Mask| Mask::from_fn(h, w, |y, x| src(y, x).is_some_and(|(sy, sx)| m.get(sy, sx)));
    FundusSample {
        image: map_array(&s.image),
        gt: map_array(&s.gt),
        roi: map_mask(&s.roi),
        crossing: map_mask(&s.crossing),
        uncertain: map_mask(&s.uncertain),
        ..s.clone()
    }
}

/// Inverse of `rotation * shear * scale` as a 2x2 matrix on `(x, y)`.
fn inverse_affine(rotation: f64, shear: f64, scale: f64) -> [[f64; 2]; 2] {
    let (sin, cos) = rotation.sin_cos();
    let t = shear.tan();
    // M = R * [[1, t], [0, 1]] * s
    let m = [[cos * scale, (cos * t - sin) * scale], [sin * scale, (sin * t + cos) * scale]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn affine(s: &FundusSample, inv: [[f64; 2]; 2]) -> FundusSample {
    let (h, w) = s.dims();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let source = |y: usize, x: usize| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (inv[0][0] * dx + inv[0][1] * dy + cx, inv[1][0] * dx + inv[1][1] * dy + cy)
    };
    let nearest = |y, x| {
        let (sx, sy) = source(y, x);
        let (rx, ry) = (sx.round(), sy.round());
        (rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64).then_some((ry as usize, rx as usize))
    };
    let mut out = remap(s, nearest, h, w);
    // the image is resampled bilinearly instead
    let (c, _, _) = s.image.chw().expect("[C,H,W]");
    for ch in 0..c {
        let plane = s.image.channel(ch);
        let at = |y: isize, x: isize| {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                plane[y as usize * w + x as usize]
            }
        };
        let dst = out.image.channel_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = source(y, x);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
                let (x0, y0) = (x0 as isize, y0 as isize);
                dst[y * w + x] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
            }
        }
    }
    out
}

/// Applies the enabled augmentations in a fixed order: flips, affine,
/// colour jitter (image only, inside the ROI), cutout (image only).
pub fn augment(s: &FundusSample, cfg: &AugmentationConfig, rng: &mut impl Rng) -> FundusSample {
    let mut out = s.clone();
    if cfg.hflip_p > 0.0 && rng.random_bool(cfg.hflip_p) {
        out = hflip(&out);
    }
    if cfg.vflip_p > 0.0 && rng.random_bool(cfg.vflip_p) {
        out = vflip(&out);
    }
    if cfg.affine {
        let rot = rng.random_range(-cfg.rotation_deg..=cfg.rotation_deg).to_radians();
        let shear = rng.random_range(-cfg.shear_deg..=cfg.shear_deg).to_radians();
        let scale = rng.random_range(cfg.scale_min..=cfg.scale_max);
        out = affine(&out, inverse_affine(rot, shear, scale));
    }
    let (h, w) = out.dims();
    let (c, _, _) = out.image.chw().expect("[C,H,W]");
    if cfg.color_jitter {
        for ch in 0..c {
            let gain = rng.random_range(cfg.gain_min..=cfg.gain_max);
            let shift = rng.random_range(cfg.shift_min..=cfg.shift_max);
            let roi = out.roi.data().to_vec();
            for (v, _) in out.image.channel_mut(ch).iter_mut().zip(roi).filter(|(_, r)| *r) {
                *v = gain * *v + shift;
            }
        }
    }
    if cfg.cutout && cfg.cutout_max_fraction > 0.0 {
        let n = rng.random_range(cfg.cutout_min..=cfg.cutout_max);
        let budget = cfg.cutout_max_fraction * (h * w) as f64;
        for _ in 0..n {
            let area = rng.random::<f64>() * budget;
            let aspect = rng.random_range(0.5..2.0f64);
            let rh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
            let rw = ((area / rh as f64).floor() as usize).min(w);
            if rw == 0 {
                continue;
            }
            let y0 = rng.random_range(0..=h - rh);
            let x0 = rng.random_range(0..=w - rw);
            for ch in 0..c {
                let plane = out.image.channel_mut(ch);
                for y in y0..y0 + rh {
                    plane[y * w + x0..y * w + x0 + rw].fill(0.0);
                }
            }
        }
    }
    out
}
