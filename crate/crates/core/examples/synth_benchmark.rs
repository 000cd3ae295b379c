//! Generates synthetic benchmark images and writes image, ground truth and
//! the pixels whose colour cue points to the wrong class.

use std::path::PathBuf;

use rrwnet::data::encode_masks;
use rrwnet::data::image_io::{write_mask, write_rgb};
use rrwnet::synth::{generate, SynthConfig};

fn main() -> rrwnet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-preview".into()));
    std::fs::create_dir_all(&out).map_err(|e| rrwnet::Error::Data(format!("{}: {e}", out.display())))?;
    let cfg = SynthConfig::default();
    for index in 0..3 {
        let s = generate(&cfg, 0, index)?;
        let vessel = s.gt.vessel.count();
        println!(
            "{}: {} curves, {vessel} vessel pixels, {:.1}% with a misleading cue",
            s.identifier,
            s.curves.len(),
            100.0 * s.misleading.count() as f64 / vessel as f64
        );
        write_rgb(&out.join(format!("{}_image.png", s.identifier)), &s.rgb)?;
        write_rgb(&out.join(format!("{}_gt.png", s.identifier)), &encode_masks(&s.gt.artery, &s.gt.vein, &s.gt.vessel)?)?;
        write_mask(&out.join(format!("{}_misleading.png", s.identifier)), &s.misleading)?;
    }
    println!("wrote previews to {}", out.display());
    Ok(())
}
