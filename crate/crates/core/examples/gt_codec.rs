//! Decodes the RGB ground-truth colours into artery, vein, vessel, crossing
//! and uncertain masks, and encodes them back.

use rrwnet::data::{decode_gt_rgb, encode_masks};

fn main() -> rrwnet::Result<()> {
    let colours: [(&str, [u8; 3]); 5] = [
        ("white", [255, 255, 255]),
        ("magenta", [255, 0, 255]),
        ("cyan", [0, 255, 255]),
        ("blue", [0, 0, 255]),
        ("black", [0, 0, 0]),
    ];
    let bytes: Vec<u8> = colours.iter().flat_map(|c| c.1).collect();
    let gt = decode_gt_rgb(&bytes, 1, colours.len(), 3)?;
    println!("{:<8} artery vein vessel crossing uncertain", "colour");
    for (x, (name, _)) in colours.iter().enumerate() {
        println!(
            "{name:<8} {:>6} {:>4} {:>6} {:>8} {:>9}",
            gt.artery.get(0, x),
            gt.vein.get(0, x),
            gt.vessel.get(0, x),
            gt.crossing.get(0, x),
            gt.uncertain.get(0, x)
        );
    }
    let encoded = encode_masks(&gt.artery, &gt.vein, &gt.vessel)?;
    println!("round trip exact: {}", encoded.as_raw() == &bytes);
    Ok(())
}
