//! Observation preprocessing, the environment contract, and rollout
//! recording.

mod archive;
mod preprocess;
pub mod toy;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use archive::{load_rollout, save_rollout, ROLLOUT_FORMAT_VERSION};
pub use preprocess::{
    grayscale_downsample, present_channel, stack_observation, RamState, RgbFrame, FRAME_BYTES, FRAME_HEIGHT,
    FRAME_WIDTH, OBS_SIZE, RAM_BYTES, STACK_DEPTH,
};
pub use toy::{ToyConfig, ToyEnv};

use crate::error::{Error, Result};
use crate::model::{FrozenModel, ModelMeta};
use crate::nn::{kernels::softmax, ActivationTrace, Net};
use crate::rng::{rng_for, streams};
use crate::tensor::Tensor;

pub const DEFAULT_ROLLOUT_STEPS: usize = 2500;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub frame: RgbFrame,
    pub ram: RamState,
    pub reward: f32,
    pub done: bool,
}

/// Adapter point for game emulators. Implementations must be deterministic
/// given the reset seed and the action sequence.
pub trait Environment {
    fn id(&self) -> &str;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> (RgbFrame, RamState);
    fn step(&mut self, action: usize) -> StepOutcome;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    #[default]
    Greedy,
    /// Softmax sample over the per-action outputs.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub frame: RgbFrame,
    pub obs: Tensor,
    pub ram: RamState,
    pub action: usize,
    pub reward: f32,
    /// Running sum of rewards up to and including this step.
    pub score: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMeta {
    pub model: ModelMeta,
    pub env_id: String,
    pub seed: u64,
    pub policy_mode: PolicyMode,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub meta: RolloutMeta,
    pub steps: Vec<StepRecord>,
    pub traces: Option<Vec<ActivationTrace>>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_score(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub policy_mode: PolicyMode,
    pub seed: u64,
    pub capture_activations: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { max_steps: DEFAULT_ROLLOUT_STEPS, policy_mode: PolicyMode::Greedy, seed: 0, capture_activations: false }
    }
}

/// Frame-history bookkeeping shared by every episode loop.
#[derive(Debug, Clone, Default)]
pub struct ObservationStack {
    history: Vec<Tensor>,
}

impl ObservationStack {
    pub fn new(first: &RgbFrame) -> Self {
        let mut stack = ObservationStack::default();
        stack.push(first);
        stack
    }

    pub fn push(&mut self, frame: &RgbFrame) {
        if self.history.len() == STACK_DEPTH {
            self.history.remove(0);
        }
        self.history.push(grayscale_downsample(frame));
    }

    pub fn observation(&self) -> Tensor {
        stack_observation(&self.history).expect("stack is never empty")
    }
}

pub(crate) fn check_model_env(net: &Net, n_actions: usize) -> Result<()> {
    let spec = net.spec();
    if spec.input != [STACK_DEPTH, OBS_SIZE, OBS_SIZE] {
        return Err(Error::shape("rollout", format!("{:?} model input", [STACK_DEPTH, OBS_SIZE, OBS_SIZE]), format!("{:?}", spec.input)));
    }
    if spec.n_actions != n_actions {
        return Err(Error::ActionCountMismatch { model: spec.n_actions, env: n_actions });
    }
    Ok(())
}

pub(crate) fn sample_action(q: &[f64], rng: &mut impl Rng) -> usize {
    let probs = softmax(q);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn record_rollout<E: Environment + ?Sized>(model: &FrozenModel, env: &mut E, config: &RolloutConfig) -> Result<Rollout> {
    record_rollout_with_net(&model.to_net()?, &model.meta, env, config)
}

pub fn record_rollout_with_net<E: Environment + ?Sized>(
    net: &Net,
    model_meta: &ModelMeta,
    env: &mut E,
    config: &RolloutConfig,
) -> Result<Rollout> {
    check_model_env(net, env.n_actions())?;
    let meta = RolloutMeta {
        model: model_meta.clone(),
        env_id: env.id().to_string(),
        seed: config.seed,
        policy_mode: config.policy_mode,
        max_steps: config.max_steps,
    };
    let mut steps = Vec::with_capacity(config.max_steps.min(DEFAULT_ROLLOUT_STEPS));
    let mut traces = config.capture_activations.then(Vec::new);
    if config.max_steps == 0 {
        return Ok(Rollout { meta, steps, traces });
    }
    let mut policy_rng = rng_for(config.seed, streams::POLICY, 0);
    let (mut frame, mut ram) = env.reset(config.seed);
    let mut stack = ObservationStack::new(&frame);
    let mut score = 0.0f64;
    while steps.len() < config.max_steps {
        let obs = stack.observation();
        let fwd = net.forward_f32(&obs)?;
        let action = match config.policy_mode {
            PolicyMode::Greedy => fwd.greedy_action(),
            PolicyMode::Sample => sample_action(fwd.q(), &mut policy_rng),
        };
        if let Some(t) = traces.as_mut() {
            t.push(net.trace_from(&fwd));
        }
        let out = env.step(action);
        score += f64::from(out.reward);
        steps.push(StepRecord { frame, obs, ram, action, reward: out.reward, score, done: out.done });
        if out.done {
            break;
        }
        stack.push(&out.frame);
        frame = out.frame;
        ram = out.ram;
    }
    Ok(Rollout { meta, steps, traces })
}

/// Plays one episode with an arbitrary policy; returns the final score.
pub fn run_episode<E: Environment + ?Sized>(
    env: &mut E,
    seed: u64,
    max_steps: usize,
    mut policy: impl FnMut(&Tensor, &RamState) -> Result<usize>,
) -> Result<f64> {
    let (frame, mut ram) = env.reset(seed);
    let mut stack = ObservationStack::new(&frame);
    let mut score = 0.0f64;
    for _ in 0..max_steps {
        let action = policy(&stack.observation(), &ram)?;
        let out = env.step(action);
        score += f64::from(out.reward);
        if out.done {
            break;
        }
        stack.push(&out.frame);
        ram = out.ram;
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Algorithm;
    use crate::nn::{HeadKind, NetworkSpec};

    fn model(head: HeadKind, n: usize) -> FrozenModel {
        FrozenModel::random(NetworkSpec::nature(head, n), ModelMeta::new("toy", Algorithm::Dqn, "r0"), 5).unwrap()
    }

    #[test]
    fn default_length_is_2500() {
        assert_eq!(RolloutConfig::default().max_steps, 2500);
        assert_eq!(DEFAULT_ROLLOUT_STEPS, 2500);
    }

    #[test]
    fn zero_steps_gives_empty_rollout() {
        let mut env = ToyEnv::new(ToyConfig::default());
        let cfg = RolloutConfig { max_steps: 0, ..Default::default() };
        let r = record_rollout(&model(HeadKind::Q, 4), &mut env, &cfg).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn action_count_mismatch_is_rejected() {
        let mut env = ToyEnv::new(ToyConfig::default());
        let err = record_rollout(&model(HeadKind::Q, 6), &mut env, &RolloutConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ActionCountMismatch { model: 6, env: 4 }));
    }

    #[test]
    fn greedy_rollouts_are_reproducible_and_consistent() {
        let m = model(HeadKind::ActorCritic, 4);
        let cfg = RolloutConfig { max_steps: 30, seed: 9, capture_activations: true, ..Default::default() };
        let a = record_rollout(&m, &mut ToyEnv::new(ToyConfig::default()), &cfg).unwrap();
        let b = record_rollout(&m, &mut ToyEnv::new(ToyConfig::default()), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let mut sum = 0.0;
        for (s, t) in a.steps.iter().zip(a.traces.as_ref().unwrap()) {
            sum += f64::from(s.reward);
            assert_eq!(s.score, sum);
            assert_eq!(s.action, t.chosen_action);
            assert!(s.obs.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn sampling_mode_is_seeded() {
        let m = model(HeadKind::Q, 4);
        let cfg = RolloutConfig { max_steps: 40, seed: 2, policy_mode: PolicyMode::Sample, ..Default::default() };
        let a = record_rollout(&m, &mut ToyEnv::new(ToyConfig::default()), &cfg).unwrap();
        let b = record_rollout(&m, &mut ToyEnv::new(ToyConfig::default()), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rollout_stops_at_done() {
        let m = model(HeadKind::Q, 4);
        let mut env = ToyEnv::new(ToyConfig::with_horizon(12));
        let r = record_rollout(&m, &mut env, &RolloutConfig { max_steps: 100, ..Default::default() }).unwrap();
        assert_eq!(r.len(), 12);
        assert!(r.steps.last().unwrap().done);
        assert!(r.steps[..11].iter().all(|s| !s.done));
    }

    #[test]
    fn newest_frame_lands_in_channel_three() {
        let mut stack = ObservationStack::new(&RgbFrame::filled([0, 0, 0]));
        stack.push(&RgbFrame::filled([0, 0, 0]));
        stack.push(&RgbFrame::filled([255, 255, 255]));
        let obs = stack.observation();
        assert!(present_channel(&obs).iter().all(|&v| v == 1.0));
        assert!(obs.data()[..3 * 7056].iter().all(|&v| v == 0.0));
    }
}
