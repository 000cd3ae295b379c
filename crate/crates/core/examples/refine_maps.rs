//! Refines externally produced artery/vein maps with a trained refiner:
//! ground-truth maps with artery and vein swapped along the reversed-cue
//! stretches are passed through 0..=K refiner applications and scored
//! after each.
//!
//! `cargo run --release --example refine_maps -- [epochs]` (a few minutes)

use rrwnet::autodiff::NdArray;
use rrwnet::data::{FundusSample, PreprocessConfig};
use rrwnet::metrics::{av_classification, AvInputs, Protocol};
use rrwnet::networks::{ARTERY, VEIN, VESSEL};
use rrwnet::synth::{generate_set, SynthConfig, SynthImage};
use rrwnet::training::{AugmentationConfig, TrainConfig, TrainOptions, Trainer};

fn accuracy(maps: &NdArray<f32>, s: &FundusSample) -> rrwnet::Result<f64> {
    let gt = s.gt_maps();
    let eval_mask = s.roi.and_not(&s.crossing).and_not(&s.uncertain);
    let inputs = AvInputs {
        pred_artery: maps.channel(ARTERY),
        pred_vein: maps.channel(VEIN),
        pred_vessel: maps.channel(VESSEL),
        gt_artery: &gt.artery,
        gt_vein: &gt.vein,
        eval_mask: &eval_mask,
    };
    Ok(av_classification(&inputs, Protocol::AllGt, 0.5)?.accuracy)
}

/// Ground-truth maps (0.9 for the true class, 0.1 for the other) with a
/// low-confidence artery/vein swap wherever the colour cue is reversed,
/// the error a purely local classifier makes.
fn corrupt(image: &SynthImage, s: &FundusSample) -> NdArray<f32> {
    let vessel = s.gt.channel(VESSEL).to_vec();
    let mut maps = s.gt.map(|v| 0.1 + 0.8 * v);
    for (i, &flip) in image.misleading.data().iter().enumerate() {
        let (a, v) = if vessel[i] > 0.5 { (maps.channel(ARTERY)[i], maps.channel(VEIN)[i]) } else { (0.0, 0.0) };
        let (a, v) = if flip { (0.55 * v + 0.45 * a, 0.55 * a + 0.45 * v) } else { (a, v) };
        maps.channel_mut(ARTERY)[i] = a;
        maps.channel_mut(VEIN)[i] = v;
    }
    maps
}

fn main() -> rrwnet::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let synth = SynthConfig::default();
    let pp = PreprocessConfig::default();
    let train: Vec<_> = generate_set(&synth, 1, 0, 40)?.iter().map(|s| s.to_sample(Some(&pp))).collect::<rrwnet::Result<_>>()?;
    let test_images = generate_set(&synth, 2, 0, 8)?;
    let cfg = TrainConfig {
        k: 3,
        base_channels: 8,
        depth: 2,
        learning_rate: 1e-3,
        max_epochs: epochs,
        augmentation: AugmentationConfig { color_jitter: false, affine: false, cutout: false, ..AugmentationConfig::default() },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&cfg)?;
    let result = trainer.fit(&train, &[], TrainOptions::default())?;

    let mut acc = vec![0.0; cfg.k + 1];
    for image in &test_images {
        let s = &image.to_sample(Some(&pp))?;
        let maps = corrupt(image, s);
        for (k, a) in acc.iter_mut().enumerate() {
            let refined = trainer.model.refine_maps(&result.last.params, &maps, k)?;
            *a += accuracy(&refined, s)? / test_images.len() as f64;
        }
    }
    for (k, a) in acc.iter().enumerate() {
        println!("k = {k}: A/V accuracy {a:.2}%");
    }
    Ok(())
}
