//! Score degradation under observation noise and convolutional weight
//! noise, and the normalization used to compare curves across games.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{check_model_env, run_episode, Environment, DEFAULT_ROLLOUT_STEPS};
use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::nn::Net;
use crate::rng::{derive_seed, rng_for, streams};
use crate::tensor::Tensor;

pub const DEFAULT_OBS_SIGMAS: [f64; 6] = [0.0, 0.05, 0.1, 0.2, 0.4, 0.8];
pub const DEFAULT_PARAM_SIGMAS: [f64; 6] = [0.0, 0.005, 0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 10, seed: 0, max_steps: DEFAULT_ROLLOUT_STEPS }
    }
}

impl EvalConfig {
    fn episode_seed(&self, episode: usize) -> u64 {
        derive_seed(self.seed, streams::EPISODE, episode as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub game: String,
    pub label: String,
    pub sigmas: Vec<f64>,
    pub mean_scores: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub episodes: usize,
    pub seed: u64,
}

impl SweepCurve {
    pub fn baseline(&self) -> f64 {
        self.mean_scores[0]
    }
}

/// Mean and population standard deviation, summed in index order.
pub fn mean_std(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_sigmas(sigmas: &[f64]) -> Result<()> {
    let ok = sigmas.first() == Some(&0.0)
        && sigmas.iter().all(|s| s.is_finite())
        && sigmas.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::UnsortedSigmas)
    }
}

fn check_episodes(cfg: &EvalConfig) -> Result<()> {
    if cfg.episodes == 0 {
        return Err(Error::Config("at least one episode is required".into()));
    }
    Ok(())
}

fn greedy_episode<E: Environment>(
    net: &Net,
    env: &mut E,
    seed: u64,
    max_steps: usize,
    mut noise: Option<(f64, &mut dyn rand::RngCore)>,
) -> Result<f64> {
    run_episode(env, seed, max_steps, |obs, _| {
        let fwd = match noise.as_mut() {
            Some((sigma, rng)) => {
                let mut noisy = obs.clone();
                for v in noisy.data_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = (f64::from(*v) + *sigma * z).clamp(0.0, 1.0) as f32;
                }
                net.forward_f32(&noisy)?
            }
            None => net.forward_f32(obs)?,
        };
        Ok(fwd.greedy_action())
    })
}

/// Per-episode scores of the greedy policy, in episode order.
pub fn episode_scores<E, F>(model: &FrozenModel, env_factory: F, cfg: &EvalConfig) -> Result<Vec<f64>>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    check_episodes(cfg)?;
    let net = model.to_net()?;
    check_model_env(&net, env_factory().n_actions())?;
    (0..cfg.episodes)
        .into_par_iter()
        .map(|e| greedy_episode(&net, &mut env_factory(), cfg.episode_seed(e), cfg.max_steps, None))
        .collect()
}

pub fn eval_score<E, F>(model: &FrozenModel, env_factory: F, cfg: &EvalConfig) -> Result<f64>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    Ok(mean_std(&episode_scores(model, env_factory, cfg)?).0)
}

fn sweep<F>(model: &FrozenModel, sigmas: &[f64], cfg: &EvalConfig, run: F) -> Result<SweepCurve>
where
    F: Fn(usize, f64, usize) -> Result<f64> + Sync,
{
    check_sigmas(sigmas)?;
    check_episodes(cfg)?;
    let mut mean_scores = Vec::with_capacity(sigmas.len());
    let mut stddevs = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        let scores = (0..cfg.episodes).into_par_iter().map(|e| run(si, sigma, e)).collect::<Result<Vec<_>>>()?;
        let (m, s) = mean_std(&scores);
        mean_scores.push(m);
        stddevs.push(s);
    }
    Ok(SweepCurve {
        game: model.meta.game.clone(),
        label: model.meta.label(),
        sigmas: sigmas.to_vec(),
        mean_scores,
        stddevs,
        episodes: cfg.episodes,
        seed: cfg.seed,
    })
}

/// Adds clipped Gaussian noise to every observation the policy sees.
pub fn observation_noise_sweep<E, F>(model: &FrozenModel, env_factory: F, sigmas: &[f64], cfg: &EvalConfig) -> Result<SweepCurve>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    let net = model.to_net()?;
    check_model_env(&net, env_factory().n_actions())?;
    sweep(model, sigmas, cfg, |si, sigma, e| {
        let mut env = env_factory();
        if sigma == 0.0 {
            return greedy_episode(&net, &mut env, cfg.episode_seed(e), cfg.max_steps, None);
        }
        let mut rng = rng_for(derive_seed(cfg.seed, streams::OBS_NOISE, si as u64), streams::OBS_NOISE, e as u64);
        greedy_episode(&net, &mut env, cfg.episode_seed(e), cfg.max_steps, Some((sigma, &mut rng)))
    })
}

/// Adds Gaussian noise to the convolutional weights only, with a fresh draw
/// on a private copy of the network for every episode.
pub fn parameter_noise_sweep<E, F>(model: &FrozenModel, env_factory: F, sigmas: &[f64], cfg: &EvalConfig) -> Result<SweepCurve>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    let net = model.to_net()?;
    check_model_env(&net, env_factory().n_actions())?;
    let conv_names: Vec<String> = (1..=net.spec().conv_layers.len()).map(|i| format!("conv{i}.w")).collect();
    sweep(model, sigmas, cfg, |si, sigma, e| {
        let mut env = env_factory();
        if sigma == 0.0 {
            return greedy_episode(&net, &mut env, cfg.episode_seed(e), cfg.max_steps, None);
        }
        let mut rng = rng_for(derive_seed(cfg.seed, streams::PARAM_NOISE, si as u64), streams::PARAM_NOISE, e as u64);
        let mut noisy = net.clone();
        for name in &conv_names {
            for w in noisy.tensor_mut(name).expect("conv weights") {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w += sigma * z;
            }
        }
        greedy_episode(&noisy, &mut env, cfg.episode_seed(e), cfg.max_steps, None)
    })
}

/// Per-episode scores of a uniformly random policy.
pub fn random_play_scores<E, F>(env_factory: F, cfg: &EvalConfig) -> Result<Vec<f64>>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    check_episodes(cfg)?;
    (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let mut env = env_factory();
            let n = env.n_actions();
            let mut rng = rng_for(cfg.seed, streams::POLICY, e as u64);
            run_episode(&mut env, cfg.episode_seed(e), cfg.max_steps, |_: &Tensor, _| Ok(rng.random_range(0..n)))
        })
        .collect()
}

pub fn random_play_baseline<E, F>(env_factory: F, cfg: &EvalConfig) -> Result<f64>
where
    E: Environment,
    F: Fn() -> E + Sync,
{
    Ok(mean_std(&random_play_scores(env_factory, cfg)?).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Anchored at each curve's own noiseless score.
    AlgorithmBest,
    /// Anchored at the best noiseless score of any curve on the same game.
    OverallBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// This curve's noiseless score does not beat random play.
    BelowRandom,
    /// Another curve on the same game does not beat random play.
    GameExcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub game: String,
    pub label: String,
    pub reason: ExclusionReason,
    pub baseline: f64,
    pub random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCurve {
    pub game: String,
    pub label: String,
    pub sigmas: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCurves {
    pub mode: NormalizationMode,
    pub random_baselines: BTreeMap<String, f64>,
    pub curves: Vec<NormalizedCurve>,
    pub exclusions: Vec<Exclusion>,
}

impl NormalizedCurves {
    /// Pointwise mean over the retained curves. Requires a shared sigma grid.
    pub fn mean_curve(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.curves.first()?;
        if self.curves.iter().any(|c| c.sigmas != first.sigmas) {
            return None;
        }
        let n = self.curves.len() as f64;
        let values = (0..first.sigmas.len()).map(|i| self.curves.iter().map(|c| c.values[i]).sum::<f64>() / n).collect();
        Some((first.sigmas.clone(), values))
    }
}

/// Maps random play to 0 and the chosen anchor to 1.
///
/// Under `AlgorithmBest` a game is dropped entirely as soon as one of its
/// curves fails to beat random play. Under `OverallBest` only games whose
/// best curve fails to beat random play are dropped.
pub fn normalize_curves(
    curves: &[SweepCurve],
    random_baselines: &BTreeMap<String, f64>,
    mode: NormalizationMode,
) -> Result<NormalizedCurves> {
    let mut games: BTreeMap<&str, Vec<&SweepCurve>> = BTreeMap::new();
    for c in curves {
        if c.mean_scores.is_empty() || c.mean_scores.len() != c.sigmas.len() {
            return Err(Error::Config(format!("curve {} has mismatched sigma/score lengths", c.label)));
        }
        check_sigmas(&c.sigmas)?;
        games.entry(c.game.as_str()).or_default().push(c);
    }
    let mut out = NormalizedCurves { mode, random_baselines: BTreeMap::new(), curves: Vec::new(), exclusions: Vec::new() };
    for (game, group) in games {
        let r = *random_baselines
            .get(game)
            .ok_or_else(|| Error::Config(format!("no random-play baseline for game {game}")))?;
        out.random_baselines.insert(game.to_string(), r);
        let exclusion = |c: &SweepCurve, reason| Exclusion {
            game: game.to_string(),
            label: c.label.clone(),
            reason,
            baseline: c.baseline(),
            random: r,
        };
        let below: Vec<bool> = group.iter().map(|c| c.baseline() - r <= 0.0).collect();
        let best = group.iter().map(|c| c.baseline()).fold(f64::NEG_INFINITY, f64::max);
        let drop_game = match mode {
            NormalizationMode::AlgorithmBest => below.iter().any(|&b| b),
            NormalizationMode::OverallBest => best - r <= 0.0,
        };
        if drop_game {
            for (c, &b) in group.iter().zip(&below) {
                out.exclusions.push(exclusion(c, if b { ExclusionReason::BelowRandom } else { ExclusionReason::GameExcluded }));
            }
            continue;
        }
        for c in group {
            let anchor = match mode {
                NormalizationMode::AlgorithmBest => c.baseline(),
                NormalizationMode::OverallBest => best,
            };
            let denom = anchor - r;
            out.curves.push(NormalizedCurve {
                game: game.to_string(),
                label: c.label.clone(),
                sigmas: c.sigmas.clone(),
                values: c.mean_scores.iter().map(|s| (s - r) / denom).collect(),
            });
        }
    }
    Ok(out)
}
