//! Writes a small synthetic dataset to disk, loads it back through the
//! dataset loader, and shows the resize rules of the supported datasets.

use rrwnet::data::{load_dataset, resize_policy, DatasetKind, DatasetLayout, LoadOptions};
use rrwnet::synth::{generate_set, write_dataset, SynthConfig};

fn main() -> rrwnet::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| rrwnet::Error::Data(e.to_string()))?;
    let cfg = SynthConfig::default();
    write_dataset(dir.path(), &generate_set(&cfg, 0, 0, 6)?, &generate_set(&cfg, 0, 6, 3)?)?;

    let layout = DatasetLayout::resolve(dir.path(), DatasetKind::Custom)?;
    print!("layout manifest:\n{}", layout.to_manifest());
    let ds = load_dataset(&layout, &LoadOptions::default())?;
    for s in ds.train.iter().chain(&ds.test).take(3) {
        let img = s.image.data();
        let mean = img.iter().sum::<f32>() / img.len() as f32;
        println!(
            "{}: {:?}, {} vessel pixels, preprocessed mean {mean:.3}",
            s.identifier,
            s.dims(),
            s.gt_maps().vessel.count()
        );
    }
    println!("{} training and {} test images", ds.train.len(), ds.test.len());

    for (kind, h, w) in [(DatasetKind::Rite, 584, 565), (DatasetKind::Hrf, 2336, 3504), (DatasetKind::LesAv, 1444, 1620)] {
        let spec = resize_policy(kind, h, w);
        println!("{kind}: {h}x{w} is processed at {}x{}", spec.working.0, spec.working.1);
    }
    Ok(())
}
