//! Seeded training augmentation: flips, affine warps, colour jitter and cutout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rrwnet::synth::{generate, SynthConfig};
use rrwnet::training::{augment, AugmentationConfig};

fn main() -> rrwnet::Result<()> {
    let sample = generate(&SynthConfig::default(), 0, 0)?.to_sample(None)?;
    let cfg = AugmentationConfig::default();
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = augment(&sample, &cfg, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = augment(&sample, &cfg, &mut rng);
        println!(
            "seed {seed}: vessel pixels {} -> {}, ROI pixels {}, reproducible: {}",
            sample.gt_maps().vessel.count(),
            a.gt_maps().vessel.count(),
            a.roi.count(),
            a.image == b.image && a.gt == b.gt
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let same = augment(&sample, &AugmentationConfig::disabled(), &mut rng);
    println!("disabled augmentation leaves the sample unchanged: {}", same.image == sample.image && same.gt == sample.gt);
    Ok(())
}
