//! The RGB ground-truth encoding: red = artery, green = vein, blue = vessel.
//! Crossings are white, arteries magenta, veins cyan, uncertain vessels blue.

use image::RgbImage;

use super::mask::Mask;
use crate::autodiff::{NdArray, Real};
use crate::error::{shape_err, Result};

/// Binarisation threshold for 8-bit ground-truth channels.
pub const GT_THRESHOLD: u8 = 128;

/// Decoded ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GtMaps {
    pub artery: Mask,
    pub vein: Mask,
    pub vessel: Mask,
    pub crossing: Mask,
    pub uncertain: Mask,
}

impl GtMaps {
    pub fn dims(&self) -> (usize, usize) {
        self.artery.dims()
    }

    /// `[3,H,W]` array with channels A, V, BV as 0/1.
    pub fn to_array<T: Real>(&self) -> NdArray<T> {
        let (h, w) = self.dims();
        let mut data = Vec::with_capacity(3 * h * w);
        for m in [&self.artery, &self.vein, &self.vessel] {
            data.extend(m.data().iter().map(|&b| if b { T::one() } else { T::zero() }));
        }
        NdArray::new(vec![3, h, w], data).expect("consistent dims")
    }

    /// Rebuilds crossing/uncertain masks from A, V and BV.
    pub fn from_avb(artery: Mask, vein: Mask, vessel: Mask) -> Self {
        let vessel = vessel.or(&artery).or(&vein);
        let crossing = artery.and(&vein);
        let uncertain = vessel.and_not(&artery.or(&vein));
        GtMaps { artery, vein, vessel, crossing, uncertain }
    }

    /// Checks the subset relations every decoded ground truth satisfies.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !self.artery.is_subset_of(&self.vessel) {
            return Err("artery pixels outside the vessel map".into());
        }
        if !self.vein.is_subset_of(&self.vessel) {
            return Err("vein pixels outside the vessel map".into());
        }
        if self.crossing != self.artery.and(&self.vein) {
            return Err("crossing map is not artery AND vein".into());
        }
        if self.uncertain.and(&self.artery.or(&self.vein)).any() {
            return Err("uncertain pixels overlap artery/vein".into());
        }
        Ok(())
    }
}

/// Decodes an interleaved 8-bit RGB buffer of `h * w * channels` bytes.
pub fn decode_gt_rgb(bytes: &[u8], h: usize, w: usize, channels: usize) -> Result<GtMaps> {
    if channels != 3 {
        return Err(shape_err!("ground truth must have 3 channels, got {}", channels));
    }
    if bytes.len() != h * w * 3 {
        return Err(shape_err!("ground truth {}x{} needs {} bytes, got {}", h, w, h * w * 3, bytes.len()));
    }
    let chan = |c: usize| -> Mask {
        Mask::new(h, w, bytes.chunks_exact(3).map(|px| px[c] >= GT_THRESHOLD).collect()).expect("sized above")
    };
    let (r, g, b) = (chan(0), chan(1), chan(2));
    Ok(GtMaps::from_avb(r, g, b))
}

pub fn decode_gt_image(img: &RgbImage) -> Result<GtMaps> {
    decode_gt_rgb(img.as_raw(), img.height() as usize, img.width() as usize, 3)
}

/// Encodes maps in `[0,1]` as an RGB image: `R = 255 A, G = 255 V, B = 255 BV`.
pub fn encode_gt_rgb(artery: &[f32], vein: &[f32], vessel: &[f32], h: usize, w: usize) -> Result<RgbImage> {
    let n = h * w;
    if artery.len() != n || vein.len() != n || vessel.len() != n {
        return Err(shape_err!(
            "encode: maps of {}/{}/{} pixels for a {}x{} image",
            artery.len(),
            vein.len(),
            vessel.len(),
            h,
            w
        ));
    }
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut raw = Vec::with_capacity(3 * n);
    for i in 0..n {
        raw.extend_from_slice(&[q(artery[i]), q(vein[i]), q(vessel[i])]);
    }
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("sized above"))
}

/// Encodes binary masks (typically decoded ground truth).
pub fn encode_masks(artery: &Mask, vein: &Mask, vessel: &Mask) -> Result<RgbImage> {
    let (h, w) = artery.dims();
    encode_gt_rgb(&artery.to_f32(), &vein.to_f32(), &vessel.to_f32(), h, w)
}
