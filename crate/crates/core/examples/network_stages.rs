//! Builds every model variant, reports parameter counts, and shows that the
//! vessel channel is never touched by the refinement stages.

use rrwnet::autodiff::NdArray;
use rrwnet::networks::{Rrwnet, RrwnetConfig, Variant, VESSEL};

fn main() -> rrwnet::Result<()> {
    for variant in [Variant::UnetOnly, Variant::Wnet, Variant::Rrunet, Variant::RrwnetAll, Variant::Rrwnet] {
        let model = Rrwnet::new(RrwnetConfig::new(variant, 8, 3, 3))?;
        let params = model.init_params::<f32>(0)?;
        println!(
            "{variant:>10}: K = {}, {} stages, {} parameters, inputs padded to multiples of {}",
            model.config.k,
            model.config.stage_count(),
            params.count(),
            model.config.size_factor()
        );
    }

    let model = Rrwnet::new(RrwnetConfig::new(Variant::Rrwnet, 8, 3, 3))?;
    let params = model.init_params::<f32>(1)?;
    let image = NdArray::from_fn(&[3, 32, 32], |i| ((i * 37) % 101) as f32 / 101.0 - 0.5);
    let stages = model.predict_stages(&params, &image)?;
    for (k, s) in stages.iter().enumerate() {
        let same = s.channel(VESSEL) == stages[0].channel(VESSEL);
        let mean = s.data().iter().sum::<f32>() / s.len() as f32;
        println!("stage {k}: shape {:?}, mean probability {mean:.4}, vessel map unchanged: {same}", s.shape());
    }
    Ok(())
}
