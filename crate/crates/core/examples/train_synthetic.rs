//! Trains a small RRWNet on the synthetic benchmark and reports artery/vein
//! accuracy of every refinement stage on held-out images.
//!
//! `cargo run --release --example train_synthetic -- [epochs]`

use rrwnet::data::PreprocessConfig;
use rrwnet::metrics::{av_classification, AvInputs, Protocol};
use rrwnet::synth::{generate_set, SynthConfig};
use rrwnet::training::{AugmentationConfig, TrainConfig, TrainOptions, Trainer};

fn main() -> rrwnet::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let synth = SynthConfig::default();
    let pp = PreprocessConfig::default();
    let load = |seed, first, count| -> rrwnet::Result<Vec<_>> {
        generate_set(&synth, seed, first, count)?.iter().map(|s| s.to_sample(Some(&pp))).collect()
    };
    let (train, val, test) = (load(1, 0, 32)?, load(1, 32, 8)?, load(2, 1000, 10)?);

    let cfg = TrainConfig {
        k: 3,
        base_channels: 8,
        depth: 2,
        learning_rate: 1e-3,
        max_epochs: epochs,
        augmentation: AugmentationConfig::disabled(),
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&cfg)?;
    let mut log = std::io::stdout();
    let result = trainer.fit(&train, &val, TrainOptions { log: Some(&mut log), ..TrainOptions::default() })?;
    let best = result.best;
    println!("best validation loss {:?} at epoch {}", best.provenance.val_loss, best.provenance.epoch);

    let mut acc = vec![0.0; cfg.k + 1];
    for s in &test {
        let gt = s.gt_maps();
        let eval_mask = s.roi.and_not(&s.crossing).and_not(&s.uncertain);
        for (k, maps) in trainer.model.predict_stages(&best.params, &s.image)?.iter().enumerate() {
            let inputs = AvInputs {
                pred_artery: maps.channel(0),
                pred_vein: maps.channel(1),
                pred_vessel: maps.channel(2),
                gt_artery: &gt.artery,
                gt_vein: &gt.vein,
                eval_mask: &eval_mask,
            };
            acc[k] += av_classification(&inputs, Protocol::AllGt, 0.5)?.accuracy / test.len() as f64;
        }
    }
    for (k, a) in acc.iter().enumerate() {
        println!("stage {k}: A/V accuracy {a:.2}%");
    }
    Ok(())
}
