//! PNG/TIFF/GIF/JPEG reading and the PNG outputs (16-bit probability maps,
//! 8-bit RGB composites).

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, RgbImage};

use super::mask::Mask;
use crate::autodiff::NdArray;
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_rgb8(path: &Path) -> Result<RgbImage> {
    let img = open(path)?;
    match img.color().channel_count() {
        3 | 4 => Ok(img.to_rgb8()),
        n => Err(Error::Image { path: path.to_path_buf(), message: format!("expected an RGB image, found {n} channel(s)") }),
    }
}

/// Ground-truth files must carry three colour channels.
pub fn read_gt_rgb(path: &Path) -> Result<RgbImage> {
    read_rgb8(path)
}

/// Any non-dark pixel (gray level >= 128) of the mask file is inside.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let g = open(path)?.to_luma8();
    Mask::new(g.height() as usize, g.width() as usize, g.pixels().map(|p| p.0[0] >= 128).collect())
}

/// Reads a single-channel probability map (8- or 16-bit) into `[0,1]`.
pub fn read_probability(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let g = open(path)?.to_luma16();
    let values = g.pixels().map(|p| p.0[0] as f32 / 65535.0).collect();
    Ok((g.height() as usize, g.width() as usize, values))
}

pub fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

pub fn write_probability(path: &Path, h: usize, w: usize, values: &[f32]) -> Result<()> {
    let raw: Vec<u16> = values.iter().map(|&v| quantize16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::Image { path: path.to_path_buf(), message: "buffer size mismatch".into() })?;
    buf.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    let raw: Vec<u8> = m.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(m.width() as u32, m.height() as u32, raw).expect("sized");
    buf.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// `[3,H,W]` float array of raw 0-255 intensities.
pub fn rgb_to_array(img: &RgbImage) -> NdArray<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    NdArray::from_fn(&[3, h, w], |i| {
        let c = i / (h * w);
        let p = i % (h * w);
        raw[p * 3 + c] as f32
    })
}
