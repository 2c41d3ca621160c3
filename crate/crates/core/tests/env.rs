mod common;

use azoo_core::env::{
    grayscale_downsample, present_channel, record_rollout, Environment, PolicyMode, RamState, RgbFrame, RolloutConfig,
    StepOutcome, ToyConfig, ToyEnv, FRAME_HEIGHT, FRAME_WIDTH,
};
use azoo_core::nn::HeadKind;
use common::*;

/// Emits a black frame every step except step `marker`, which is white.
struct MarkerEnv {
    t: usize,
    marker: usize,
}

impl Environment for MarkerEnv {
    fn id(&self) -> &str {
        "marker"
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn reset(&mut self, _seed: u64) -> (RgbFrame, RamState) {
        self.t = 0;
        (RgbFrame::filled([0, 0, 0]), RamState::default())
    }

    fn step(&mut self, _action: usize) -> StepOutcome {
        self.t += 1;
        let c = if self.t == self.marker { 255 } else { 0 };
        StepOutcome { frame: RgbFrame::filled([c, c, c]), ram: RamState::default(), reward: self.t as f32 * 0.5, done: false }
    }
}

#[test]
fn marker_frame_enters_at_channel_three_and_ages_out() {
    let model = toy_model(HeadKind::Q, 0);
    let mut env = MarkerEnv { t: 0, marker: 3 };
    let r = record_rollout(&model, &mut env, &RolloutConfig { max_steps: 8, ..Default::default() }).unwrap();
    let plane = 84 * 84;
    for (t, s) in r.steps.iter().enumerate() {
        let lit: Vec<bool> = (0..4).map(|c| s.obs.data()[c * plane] == 1.0).collect();
        // frame produced by step 3 is observed from step index 3 on, in
        // channel 3, then 2, 1, 0
        let expect: Vec<bool> = (0..4).map(|c| t >= 3 && t - 3 == 3 - c).collect();
        assert_eq!(lit, expect, "step {t}");
    }
}

#[test]
fn cumulative_score_is_the_prefix_sum() {
    let model = toy_model(HeadKind::Dueling, 1);
    let mut env = MarkerEnv { t: 0, marker: 100 };
    let r = record_rollout(&model, &mut env, &RolloutConfig { max_steps: 20, ..Default::default() }).unwrap();
    let mut acc = 0.0f64;
    for s in &r.steps {
        acc += f64::from(s.reward);
        assert_eq!(s.score, acc);
    }
    assert_eq!(r.final_score(), acc);
}

#[test]
fn observations_stay_in_unit_range() {
    let model = toy_model(HeadKind::C51, 2);
    let r = toy_rollout(&model, 50, 3, false);
    for s in &r.steps {
        assert_eq!(s.obs.shape(), &[4, 84, 84]);
        assert!(s.obs.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(present_channel(&s.obs), grayscale_downsample(&s.frame).data());
    }
}

#[test]
fn greedy_rollouts_repeat_exactly() {
    let model = toy_model(HeadKind::ActorCritic, 3);
    assert_eq!(toy_rollout(&model, 40, 8, true), toy_rollout(&model, 40, 8, true));
}

#[test]
fn sampled_rollouts_depend_on_seed() {
    let model = toy_model(HeadKind::Q, 4);
    let run = |seed| {
        let cfg = RolloutConfig { max_steps: 60, seed, policy_mode: PolicyMode::Sample, ..Default::default() };
        record_rollout(&model, &mut ToyEnv::new(ToyConfig::default()), &cfg).unwrap()
    };
    let actions = |r: &azoo_core::env::Rollout| r.steps.iter().map(|s| s.action).collect::<Vec<_>>();
    assert_eq!(actions(&run(1)), actions(&run(1)));
    assert_ne!(actions(&run(1)), actions(&run(2)));
}

#[test]
fn toy_frames_have_atari_dimensions() {
    let mut env = ToyEnv::new(ToyConfig::default());
    let (frame, _) = env.reset(0);
    assert_eq!(frame.bytes().len(), FRAME_HEIGHT * FRAME_WIDTH * 3);
    assert_eq!(env.n_actions(), 4);
}

#[test]
fn ram_bits_are_msb_first() {
    let mut ram = RamState::default();
    ram.0[0] = 0x80;
    ram.0[127] = 0x01;
    let bits = ram.bits();
    assert_eq!(bits.len(), 1024);
    assert_eq!(&bits[..8], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(bits[1023], 1.0);
    assert_eq!(bits.iter().sum::<f64>(), 2.0);
}
