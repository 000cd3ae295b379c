//! Scores perturbed copies of synthetic ground truth with the full metric
//! report: AUROC/AUPR, both A/V protocols, vessel detection and COR/INF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrwnet::autodiff::NdArray;
use rrwnet::metrics::{evaluate, EvalConfig, Prediction, TopoConfig};
use rrwnet::synth::{generate_set, SynthConfig};

fn main() -> rrwnet::Result<()> {
    let images = generate_set(&SynthConfig::default(), 5, 0, 4)?;
    let samples: Vec<_> = images.iter().map(|s| s.to_sample(None)).collect::<rrwnet::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let predictions: Vec<Prediction> = samples
        .iter()
        .map(|s| {
            let noisy = NdArray::from_fn(s.gt.shape(), |i| 0.55 * s.gt.data()[i] + 0.5 * rng.random::<f32>());
            Prediction { identifier: s.identifier.clone(), maps: noisy }
        })
        .collect();
    let cfg = EvalConfig { threshold: 0.5, topology: Some(TopoConfig { n_paths: 200, ..TopoConfig::default() }) };
    let report = evaluate(&predictions, &samples, &cfg)?;
    for m in &report.images {
        println!(
            "{}: artery AUROC {:.4}, A/V accuracy {:.2}% (all GT), vessel accuracy {:.2}%",
            m.identifier, m.artery.auroc, m.av_all_gt.accuracy, m.bv.accuracy
        );
    }
    let mean = &report.mean;
    println!("mean A/V accuracy {:.2}%, artery COR/INF {:?}", mean.av_all_gt.accuracy, mean.topo_artery);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| rrwnet::Error::Data(e.to_string()))?;
    println!("{}", String::from_utf8_lossy(&csv).lines().last().unwrap_or_default());
    Ok(())
}
