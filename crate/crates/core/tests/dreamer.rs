mod common;

use azoo_core::dreamer::*;
use azoo_core::nn::Objective;
use azoo_core::synth::quadrant_reader;
use azoo_core::{Error, HeadKind};
use common::*;

#[test]
fn dream_beats_random_inputs() {
    let model = toy_model(HeadKind::Q, 21);
    let net = model.to_net().unwrap();
    for obj in [Objective::ConvChannel { layer: 2, channel: 7 }, Objective::FcUnit(100), Objective::Output(1)] {
        let d = synthesize_with_net(&net, &obj, &DreamConfig { iterations: 256, seed: 1, ..Default::default() }).unwrap();
        let baseline = best_random(&net, &obj, 2);
        assert!(d.activation > baseline, "{obj:?}: {} vs {baseline}", d.activation);
        assert_eq!(d.history.len(), 257);
        assert!(d.history.last().unwrap() >= &d.history[0]);
        assert!(d.input.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn total_variation_penalty_smooths() {
    let model = toy_model(HeadKind::Dueling, 4);
    let obj = Objective::ConvChannel { layer: 3, channel: 2 };
    let base = DreamConfig { iterations: 200, seed: 5, ..Default::default() };
    let plain = synthesize(&model, &obj, &base).unwrap();
    let smooth = synthesize(&model, &obj, &DreamConfig { lambda_tv: 1e-3, ..base }).unwrap();
    let (a, b) = (total_variation(&plain.input).unwrap(), total_variation(&smooth.input).unwrap());
    assert!(b < a, "tv {b} not below {a}");
    let sparse = synthesize(&model, &obj, &DreamConfig { lambda_l1: 1e-3, ..base }).unwrap();
    let l1 = |t: &azoo_core::Tensor| t.data().iter().map(|v| f64::from(v.abs())).sum::<f64>();
    assert!(l1(&sparse.input) < l1(&plain.input));
}

#[test]
fn dreams_are_seed_deterministic() {
    let model = toy_model(HeadKind::C51, 8);
    let obj = Objective::ConvUnit { layer: 1, channel: 4, y: 10, x: 3 };
    let cfg = DreamConfig { iterations: 60, seed: 3, ..Default::default() };
    let a = synthesize(&model, &obj, &cfg).unwrap();
    let b = synthesize(&model, &obj, &cfg).unwrap();
    assert_eq!(a, b);
    let c = synthesize(&model, &obj, &DreamConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.input, c.input);
}

#[test]
fn linear_objective_climbs_every_step() {
    // all weights non-negative and inputs positive: Output(0) is linear
    let model = quadrant_reader().unwrap();
    let cfg = DreamConfig { iterations: 20, step_size: 1e-4, jitter_max: 0, ascent: Ascent::Plain, ..Default::default() };
    let d = synthesize(&model, &Objective::Output(0), &cfg).unwrap();
    assert!(d.history.windows(2).all(|w| w[1] > w[0]), "{:?}", d.history);
}

#[test]
fn bad_objectives_and_configs_are_rejected() {
    let model = toy_model(HeadKind::Q, 1);
    let cfg = DreamConfig { iterations: 2, ..Default::default() };
    assert!(synthesize(&model, &Objective::FcUnit(512), &cfg).is_err());
    assert!(synthesize(&model, &Objective::ConvChannel { layer: 4, channel: 0 }, &cfg).is_err());
    let err = synthesize(&model, &Objective::Output(0), &DreamConfig { iterations: 0, ..cfg }).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!("conv9".parse::<Objective>().is_err());
}
