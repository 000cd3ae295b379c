//! Seeded synthetic benchmark: small images of smooth crossing curves whose
//! artery/vein colour cue is reversed along one stretch of every curve, so
//! a purely local classifier makes errors that vessel context can correct.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::NdArray;
use crate::data::image_io::{rgb_to_array, write_mask, write_rgb};
use crate::data::{encode_masks, preprocess, FundusSample, GtMaps, Mask, PreprocessConfig, MANIFEST_NAME};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub min_curves: usize,
    pub max_curves: usize,
    pub min_width: usize,
    pub max_width: usize,
    /// Green-channel darkening of vessel pixels (0-255 scale).
    pub contrast: f64,
    /// Peak red-channel offset separating arteries (+) from veins (-).
    pub cue_strength: f64,
    /// Share of each curve, by parameter, whose cue is reversed.
    pub reversed_min: f64,
    pub reversed_max: f64,
    /// Standard deviation of per-pixel noise.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 64,
            min_curves: 2,
            max_curves: 4,
            min_width: 1,
            max_width: 3,
            contrast: 60.0,
            cue_strength: 35.0,
            reversed_min: 0.3,
            reversed_max: 0.45,
            noise: 4.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.size >= 8
            && (1..=self.max_curves).contains(&self.min_curves)
            && (1..=self.max_width).contains(&self.min_width)
            && 0.0 <= self.reversed_min
            && self.reversed_min <= self.reversed_max
            && self.reversed_max < 1.0
            && self.noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid synthetic benchmark settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VesselClass {
    Artery,
    Vein,
}

/// One generated curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCurve {
    pub class: VesselClass,
    pub width: usize,
    /// Bezier control points `(x, y)`.
    pub control: [(f64, f64); 4],
    /// Parameter interval with a reversed colour cue.
    pub reversed: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct SynthImage {
    pub identifier: String,
    pub rgb: RgbImage,
    pub gt: GtMaps,
    pub roi: Mask,
    pub curves: Vec<SynthCurve>,
    /// Vessel pixels whose local cue points to the wrong class.
    pub misleading: Mask,
}

impl SynthImage {
    /// The sample as the dataset loader would produce it from files.
    pub fn to_sample(&self, preprocessing: Option<&PreprocessConfig>) -> Result<FundusSample> {
        let raw = rgb_to_array(&self.rgb);
        let image: NdArray<f32> = match preprocessing {
            Some(cfg) => preprocess(&raw, &self.roi, cfg)?,
            None => raw,
        };
        FundusSample::new(self.identifier.clone(), image, &self.gt, self.roi.clone())
    }
}

fn bezier(c: &[(f64, f64); 4], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    (
        (0..4).map(|i| w[i] * c[i].0).sum(),
        (0..4).map(|i| w[i] * c[i].1).sum(),
    )
}

fn border_point(rng: &mut impl Rng, side: usize, s: f64) -> (f64, f64) {
    let v = rng.random_range(0.1 * s..0.9 * s);
    match side % 4 {
        0 => (v, -1.0),
        1 => (s, v),
        2 => (v, s),
        _ => (-1.0, v),
    }
}

fn random_curve(rng: &mut impl Rng, cfg: &SynthConfig, class: VesselClass) -> SynthCurve {
    let s = cfg.size as f64;
    let side = rng.random_range(0..4);
    let other = side + rng.random_range(1..4);
    let p0 = border_point(rng, side, s);
    let p3 = border_point(rng, other, s);
    let mut inner = || (rng.random_range(0.15 * s..0.85 * s), rng.random_range(0.15 * s..0.85 * s));
    let control = [p0, inner(), inner(), p3];
    let len = rng.random_range(cfg.reversed_min..=cfg.reversed_max);
    let start = rng.random_range(0.15..(0.85 - len).max(0.15 + 1e-9));
    SynthCurve { class, width: rng.random_range(cfg.min_width..=cfg.max_width), control, reversed: (start, start + len) }
}

/// Generates image `index` of the benchmark with the given seed.
pub fn generate(cfg: &SynthConfig, seed: u64, index: usize) -> Result<SynthImage> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = cfg.size;
    let count = rng.random_range(cfg.min_curves..=cfg.max_curves);
    let curves: Vec<SynthCurve> = (0..count)
        .map(|i| {
            let class = match i {
                0 => VesselClass::Artery,
                1 => VesselClass::Vein,
                _ if rng.random_bool(0.5) => VesselClass::Artery,
                _ => VesselClass::Vein,
            };
            random_curve(&mut rng, cfg, class)
        })
        .collect();

    let mut artery = Mask::filled(n, n, false);
    let mut vein = Mask::filled(n, n, false);
    // summed cue and hit count per pixel, for averaging at overlaps
    let mut cue = vec![0.0f64; n * n];
    let mut hits = vec![0u32; n * n];
    let mut wrong = vec![0i32; n * n];
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for c in &curves {
        let radius = (c.width as f64 / 2.0).max(0.55);
        let steps = 8 * 4 * n;
        let mut stamped = vec![false; n * n];
        for j in 0..=steps {
            let t = j as f64 / steps as f64;
            let (px, py) = bezier(&c.control, t);
            let reversed = (c.reversed.0..c.reversed.1).contains(&t);
            let sign = match c.class {
                VesselClass::Artery => 1.0,
                VesselClass::Vein => -1.0,
            } * if reversed { -1.0 } else { 1.0 };
            let magnitude = cfg.cue_strength * (0.75 + 0.25 * (6.0 * t + phase).sin());
            let r = radius.ceil() as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (px.floor() as isize + dx, py.floor() as isize + dy);
                    if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
                        continue;
                    }
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    if (cx - px).hypot(cy - py) > radius {
                        continue;
                    }
                    let i = y as usize * n + x as usize;
                    if stamped[i] {
                        continue;
                    }
                    stamped[i] = true;
                    match c.class {
                        VesselClass::Artery => artery.data_mut()[i] = true,
                        VesselClass::Vein => vein.data_mut()[i] = true,
                    }
                    cue[i] += sign * magnitude;
                    hits[i] += 1;
                    wrong[i] += i32::from(reversed);
                }
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise.max(1e-12)).expect("finite");
    let (gx, gy) = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
    let mut rgb = RgbImage::new(n as u32, n as u32);
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let shade = gx * x as f64 + gy * y as f64;
            let mut px = [150.0 + shade, 95.0 + shade, 55.0 + 0.5 * shade];
            if hits[i] > 0 {
                px[0] += cue[i] / hits[i] as f64 - 0.3 * cfg.contrast;
                px[1] -= cfg.contrast;
                px[2] -= 0.3 * cfg.contrast;
            }
            let v = px.map(|p| (p + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
            rgb.put_pixel(x as u32, y as u32, Rgb(v));
        }
    }
    let vessel = artery.or(&vein);
    let misleading = Mask::from_fn(n, n, |y, x| {
        let i = y * n + x;
        hits[i] == 1 && wrong[i] > 0
    });
    Ok(SynthImage {
        identifier: format!("synth_{index:03}"),
        rgb,
        gt: GtMaps::from_avb(artery, vein, vessel),
        roi: Mask::filled(n, n, true),
        curves,
        misleading,
    })
}

/// Images `first..first + count`.
pub fn generate_set(cfg: &SynthConfig, seed: u64, first: usize, count: usize) -> Result<Vec<SynthImage>> {
    (first..first + count).map(|i| generate(cfg, seed, i)).collect()
}

/// Writes a `custom` dataset layout (`train/` and `test/`, each with
/// `images/`, `av/` and `mask/`) plus its manifest.
pub fn write_dataset(dir: &Path, train: &[SynthImage], test: &[SynthImage]) -> Result<()> {
    for (part, images) in [("train", train), ("test", test)] {
        for sub in ["images", "av", "mask"] {
            let d = dir.join(part).join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for s in images {
            let base = dir.join(part);
            write_rgb(&base.join("images").join(format!("{}.png", s.identifier)), &s.rgb)?;
            let av = encode_masks(&s.gt.artery, &s.gt.vein, &s.gt.vessel)?;
            write_rgb(&base.join("av").join(format!("{}.png", s.identifier)), &av)?;
            write_mask(&base.join("mask").join(format!("{}.png", s.identifier)), &s.roi)?;
        }
    }
    let manifest = dir.join(MANIFEST_NAME);
    fs::write(&manifest, "kind = custom\ntrain = train\ntest = test\n").map_err(|e| Error::io(&manifest, e))
}
