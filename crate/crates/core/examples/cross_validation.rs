//! Seeded cross-validation folds and the single holdout split.

use rrwnet::training::{cross_validation_split, holdout_split};

fn main() -> rrwnet::Result<()> {
    for (f, (train, val)) in cross_validation_split(22, 4, 7)?.iter().enumerate() {
        println!("fold {f}: {} train, validation {:?}", train.len(), val);
    }
    let (train, val) = holdout_split(22, 0.2, 7);
    println!("holdout: {} train, validation {:?}", train.len(), val);
    Ok(())
}
