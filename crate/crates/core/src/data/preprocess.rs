//! Global contrast enhancement followed by local intensity normalisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::Mask;
use crate::autodiff::NdArray;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Lower percentile (0-100) of ROI intensities mapped to 0.
    pub low_percentile: f64,
    /// Upper percentile mapped to 1.
    pub high_percentile: f64,
    /// Background blur sigma as a fraction of image width.
    pub sigma_fraction: f64,
    pub std_scale: f64,
    pub std_offset: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            low_percentile: 1.0,
            high_percentile: 99.0,
            sigma_fraction: 1.0 / 30.0,
            std_scale: 4.0,
            std_offset: 0.05,
        }
    }
}

fn percentile(sorted: &[f32], q: f64) -> f32 {
    let idx = ((q / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with zero padding.
fn blur(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let sx = x as isize + t as isize - r;
                if sx >= 0 && sx < w as isize {
                    acc += k * plane[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (t, &k) in kernel.iter().enumerate() {
            let sy = y as isize + t as isize - r;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let src = &tmp[sy as usize * w..(sy as usize + 1) * w];
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                *o += k * s;
            }
        }
    }
    out
}

/// Blur of `values` restricted to the ROI, renormalised by the blurred ROI weight.
fn masked_blur(values: &[f64], roi_weight: &[f64], norm: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let prod: Vec<f64> = values.iter().zip(roi_weight).map(|(v, m)| v * m).collect();
    blur(&prod, h, w, kernel)
        .into_iter()
        .zip(norm)
        .map(|(b, &n)| if n > 1e-12 { b / n } else { 0.0 })
        .collect()
}

/// `image` is `[3,H,W]` with raw intensities (0-255). Returns values in `[-1,1]`,
/// zero outside the ROI.
pub fn preprocess(image: &NdArray<f32>, roi: &Mask, cfg: &PreprocessConfig) -> Result<NdArray<f32>> {
    let (c, h, w) = image.chw()?;
    if roi.dims() != (h, w) {
        return Err(shape_err!("ROI {:?} does not match image {}x{}", roi.dims(), h, w));
    }
    if !roi.any() {
        return Err(Error::Data("empty region of interest".into()));
    }
    let sigma = (w as f64 * cfg.sigma_fraction).max(0.5);
    let kernel = gaussian_kernel(sigma);
    let weight: Vec<f64> = roi.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let norm = blur(&weight, h, w, &kernel);

    let planes: Vec<Vec<f32>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let plane = image.channel(ch);
            let mut inside: Vec<f32> = plane.iter().zip(roi.data()).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
            inside.sort_by(f32::total_cmp);
            let lo = percentile(&inside, cfg.low_percentile) as f64;
            let hi = percentile(&inside, cfg.high_percentile) as f64;
            let stretched: Vec<f64> = if hi - lo < 1e-6 {
                vec![0.0; h * w]
            } else {
                plane.iter().map(|&v| ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
            };
            let background = masked_blur(&stretched, &weight, &norm, h, w, &kernel);
            let diff: Vec<f64> = stretched.iter().zip(&background).map(|(s, b)| s - b).collect();
            let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
            let var = masked_blur(&sq, &weight, &norm, h, w, &kernel);
            diff.iter()
                .zip(&var)
                .zip(roi.data())
                .map(|((&d, &v), &m)| {
                    if !m {
                        return 0.0;
                    }
                    let denom = cfg.std_scale * (v.max(0.0).sqrt() + cfg.std_offset);
                    (d / denom).clamp(-1.0, 1.0) as f32
                })
                .collect()
        })
        .collect();
    NdArray::new(vec![c, h, w], planes.concat())
}
