//! Saves a training run mid-way, resumes it from disk, and checks that the
//! result is bit-identical to an uninterrupted run.

use rrwnet::checkpoint::Checkpoint;
use rrwnet::synth::{generate_set, SynthConfig};
use rrwnet::training::{TrainConfig, Trainer};

fn main() -> rrwnet::Result<()> {
    let samples: Vec<_> =
        generate_set(&SynthConfig { size: 32, ..SynthConfig::default() }, 0, 0, 4)?.iter().map(|s| s.to_sample(None)).collect::<rrwnet::Result<_>>()?;
    let cfg = TrainConfig { k: 2, base_channels: 4, depth: 2, learning_rate: 1e-3, ..TrainConfig::default() };

    let mut straight = Trainer::new(&cfg)?;
    let prepared = straight.prepare(&samples)?;
    for _ in 0..4 {
        straight.run_epoch(&prepared)?;
    }

    let dir = tempfile::tempdir().map_err(|e| rrwnet::Error::Data(e.to_string()))?;
    let path = dir.path().join("epoch2.ckpt");
    let mut first = Trainer::new(&cfg)?;
    for _ in 0..2 {
        first.run_epoch(&prepared)?;
    }
    first.checkpoint(true, None, "mid-run").save(&path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);

    let mut resumed = Trainer::resume(&cfg, &Checkpoint::load(&path)?)?;
    for _ in 0..2 {
        resumed.run_epoch(&prepared)?;
    }
    println!("checkpoint: {size} bytes, {} parameters", resumed.params.count());
    println!("resumed run bit-identical: {}", resumed.params == straight.params);
    Ok(())
}
