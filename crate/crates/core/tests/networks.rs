mod common;

use common::{random_array, rng};
use rrwnet::autodiff::NdArray;
use rrwnet::networks::{Rrwnet, RrwnetConfig, Variant, ARTERY, VESSEL};

fn model(variant: Variant, k: usize) -> Rrwnet {
    Rrwnet::new(RrwnetConfig::new(variant, 4, 2, k)).unwrap()
}

#[test]
fn every_variant_produces_k_plus_one_three_channel_stages() {
    let image = random_array(&[3, 12, 20], &mut rng(0));
    for variant in Variant::ALL {
        let m = model(variant, 3);
        let params = m.init_params::<f64>(1).unwrap();
        let stages = m.predict_stages(&params, &image).unwrap();
        assert_eq!(stages.len(), m.config.k + 1, "{variant}");
        for s in &stages {
            assert_eq!(s.shape(), &[3, 12, 20]);
            assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn vessel_map_passes_through_refinement_unchanged() {
    let m = model(Variant::Rrwnet, 4);
    let params = m.init_params::<f32>(2).unwrap();
    let image = random_array(&[3, 8, 8], &mut rng(3)).cast::<f32>();
    let stages = m.predict_stages(&params, &image).unwrap();
    for s in &stages[1..] {
        assert_eq!(s.channel(VESSEL), stages[0].channel(VESSEL));
    }
}

#[test]
fn final_stage_is_repeated_refiner_application() {
    let m = model(Variant::Rrwnet, 3);
    let params = m.init_params::<f64>(4).unwrap();
    let image = random_array(&[3, 8, 8], &mut rng(5));
    let y0 = m.base_forward(&params, &image).unwrap();
    let mut av = y0.channels(ARTERY, 2).unwrap();
    for _ in 0..3 {
        av = m.rr_forward(&params, &av).unwrap();
    }
    let manual = NdArray::concat_channels(&[&av, &y0.channels(VESSEL, 1).unwrap()]).unwrap();
    assert_eq!(m.predict(&params, &image).unwrap(), manual);
    assert_eq!(m.refine_maps(&params, &y0, 3).unwrap(), manual);
}

#[test]
fn refine_with_zero_iterations_returns_the_input() {
    let m = model(Variant::Rrwnet, 2);
    let params = m.init_params::<f32>(6).unwrap();
    let maps = random_array(&[3, 8, 8], &mut rng(7)).cast::<f32>();
    assert_eq!(m.refine_maps(&params, &maps, 0).unwrap(), maps);
}

#[test]
fn refiner_rejects_wrong_channel_counts() {
    let m = model(Variant::RrwnetAll, 2);
    let params = m.init_params::<f32>(0).unwrap();
    let two = NdArray::<f32>::zeros(&[2, 8, 8]);
    assert!(m.rr_forward(&params, &two).is_err());
    let unet = model(Variant::UnetOnly, 0);
    let p = unet.init_params::<f32>(0).unwrap();
    assert!(unet.rr_forward(&p, &two).is_err());
}

#[test]
fn variants_fix_their_iteration_counts() {
    assert_eq!(RrwnetConfig::new(Variant::Wnet, 8, 3, 6).k, 1);
    assert_eq!(RrwnetConfig::new(Variant::UnetOnly, 8, 3, 6).k, 0);
    assert_eq!(RrwnetConfig::new(Variant::Rrwnet, 8, 3, 6).k, 6);
    let mut bad = RrwnetConfig::new(Variant::Wnet, 8, 3, 1);
    bad.k = 2;
    assert!(bad.validate().is_err());
    for v in Variant::ALL {
        assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
    }
    assert!("unet".parse::<Variant>().is_err());
}

#[test]
fn initialisation_is_seeded() {
    let m = model(Variant::Rrwnet, 2);
    assert_eq!(m.init_params::<f32>(9).unwrap(), m.init_params::<f32>(9).unwrap());
    assert_ne!(m.init_params::<f32>(9).unwrap(), m.init_params::<f32>(10).unwrap());
    let names = m.init_params::<f32>(9).unwrap().names().to_vec();
    assert!(names.iter().any(|n| n.starts_with("base.")) && names.iter().any(|n| n.starts_with("refiner.")));
}
