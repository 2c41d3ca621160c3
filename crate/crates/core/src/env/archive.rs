//! On-disk rollout cache: a JSON manifest plus one flat binary file per
//! stream.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::preprocess::{RamState, RgbFrame, FRAME_BYTES, OBS_SIZE, RAM_BYTES, STACK_DEPTH};
use super::{Rollout, RolloutMeta, StepRecord};
use crate::error::{Error, Result};
use crate::nn::ActivationTrace;
use crate::tensor::Tensor;

pub const ROLLOUT_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const FRAMES: &str = "frames.bin";
const OBS: &str = "obs.bin";
const RAM: &str = "ram.bin";
const STEPS: &str = "steps.json";
const OBS_LEN: usize = STACK_DEPTH * OBS_SIZE * OBS_SIZE;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    step_count: usize,
    streams: Vec<String>,
    env_id: String,
    seed: u64,
    policy_mode: super::PolicyMode,
    max_steps: usize,
    model: crate::model::ModelMeta,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    activations: Vec<ActivationStream>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ActivationStream {
    layer: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepsFile {
    actions: Vec<usize>,
    rewards: Vec<f32>,
    scores: Vec<f64>,
    dones: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chosen_actions: Option<Vec<usize>>,
}

fn act_file(layer: &str) -> String {
    format!("act_{layer}.bin")
}

fn trace_layers(trace: &ActivationTrace) -> Vec<(String, &Tensor)> {
    let mut out: Vec<(String, &Tensor)> = trace.conv.iter().enumerate().map(|(i, t)| (format!("conv{}", i + 1), t)).collect();
    out.push(("fc".into(), &trace.fc));
    out.push(("head_raw".into(), &trace.head_raw));
    out.push(("head_q".into(), &trace.head_q));
    out
}

fn f32_bytes<'a>(values: impl IntoIterator<Item = &'a f32>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save_rollout(rollout: &Rollout, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let steps = &rollout.steps;
    let mut streams = vec![FRAMES.to_string(), OBS.to_string(), RAM.to_string(), STEPS.to_string()];

    let mut frames = Vec::with_capacity(steps.len() * FRAME_BYTES);
    let mut obs = Vec::with_capacity(steps.len() * OBS_LEN * 4);
    let mut ram = Vec::with_capacity(steps.len() * RAM_BYTES);
    for s in steps {
        frames.extend_from_slice(s.frame.bytes());
        if s.obs.len() != OBS_LEN {
            return Err(Error::shape("save_rollout", format!("{OBS_LEN} observation values"), s.obs.len().to_string()));
        }
        obs.extend(f32_bytes(s.obs.data()));
        ram.extend_from_slice(&s.ram.0);
    }
    fs::write(dir.join(FRAMES), frames)?;
    fs::write(dir.join(OBS), obs)?;
    fs::write(dir.join(RAM), ram)?;

    let mut activations = Vec::new();
    if let Some(traces) = &rollout.traces {
        if traces.len() != steps.len() {
            return Err(Error::StreamLength { stream: "traces".into(), expected: steps.len(), actual: traces.len() });
        }
        if let Some(first) = traces.first() {
            for (idx, (layer, t)) in trace_layers(first).into_iter().enumerate() {
                let mut buf = Vec::with_capacity(steps.len() * t.len() * 4);
                for tr in traces {
                    let lt = trace_layers(tr).swap_remove(idx).1;
                    if lt.shape() != t.shape() {
                        return Err(Error::shape("save_rollout", format!("{:?}", t.shape()), format!("{:?}", lt.shape())));
                    }
                    buf.extend(f32_bytes(lt.data()));
                }
                fs::write(dir.join(act_file(&layer)), buf)?;
                streams.push(act_file(&layer));
                activations.push(ActivationStream { layer, shape: t.shape().to_vec() });
            }
        }
    }

    let steps_file = StepsFile {
        actions: steps.iter().map(|s| s.action).collect(),
        rewards: steps.iter().map(|s| s.reward).collect(),
        scores: steps.iter().map(|s| s.score).collect(),
        dones: steps.iter().map(|s| s.done).collect(),
        chosen_actions: rollout.traces.as_ref().map(|t| t.iter().map(|tr| tr.chosen_action).collect()),
    };
    fs::write(dir.join(STEPS), serde_json::to_vec(&steps_file)?)?;

    let meta = &rollout.meta;
    let manifest = Manifest {
        format_version: ROLLOUT_FORMAT_VERSION,
        step_count: steps.len(),
        streams,
        env_id: meta.env_id.clone(),
        seed: meta.seed,
        policy_mode: meta.policy_mode,
        max_steps: meta.max_steps,
        model: meta.model.clone(),
        activations,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_stream(dir: &Path, name: &str, per_step: usize, steps: usize) -> Result<Vec<u8>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingStream(path));
    }
    let bytes = fs::read(&path)?;
    if bytes.len() != per_step * steps {
        return Err(Error::StreamLength {
            stream: name.to_string(),
            expected: steps,
            actual: bytes.len() / per_step.max(1),
        });
    }
    Ok(bytes)
}

fn read_f32s(chunk: &[u8]) -> Vec<f32> {
    chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()
}

fn check_len<T>(stream: &str, v: &[T], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::StreamLength { stream: stream.to_string(), expected, actual: v.len() });
    }
    Ok(())
}

pub fn load_rollout(dir: impl AsRef<Path>) -> Result<Rollout> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::MissingStream(manifest_path));
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    if manifest.format_version != ROLLOUT_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(manifest.format_version));
    }
    let n = manifest.step_count;

    let frames = read_stream(dir, FRAMES, FRAME_BYTES, n)?;
    let obs = read_stream(dir, OBS, OBS_LEN * 4, n)?;
    let ram = read_stream(dir, RAM, RAM_BYTES, n)?;
    let steps_path = dir.join(STEPS);
    if !steps_path.is_file() {
        return Err(Error::MissingStream(steps_path));
    }
    let sf: StepsFile = serde_json::from_slice(&fs::read(&steps_path)?)?;
    check_len("actions", &sf.actions, n)?;
    check_len("rewards", &sf.rewards, n)?;
    check_len("scores", &sf.scores, n)?;
    check_len("dones", &sf.dones, n)?;

    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let frame = RgbFrame::new(frames[i * FRAME_BYTES..(i + 1) * FRAME_BYTES].to_vec())?;
        let obs = Tensor::new(vec![STACK_DEPTH, OBS_SIZE, OBS_SIZE], read_f32s(&obs[i * OBS_LEN * 4..(i + 1) * OBS_LEN * 4]))?;
        let mut r = [0u8; RAM_BYTES];
        r.copy_from_slice(&ram[i * RAM_BYTES..(i + 1) * RAM_BYTES]);
        steps.push(StepRecord {
            frame,
            obs,
            ram: RamState(r),
            action: sf.actions[i],
            reward: sf.rewards[i],
            score: sf.scores[i],
            done: sf.dones[i],
        });
    }

    let traces = if manifest.activations.is_empty() {
        None
    } else {
        let chosen = sf.chosen_actions.unwrap_or_else(|| sf.actions.clone());
        check_len("chosen_actions", &chosen, n)?;
        let mut layers = Vec::with_capacity(manifest.activations.len());
        for a in &manifest.activations {
            let per = a.shape.iter().product::<usize>();
            let bytes = read_stream(dir, &act_file(&a.layer), per * 4, n)?;
            layers.push((a, per, read_f32s(&bytes)));
        }
        let mut traces = Vec::with_capacity(n);
        for (i, &chosen_action) in chosen.iter().enumerate() {
            let mut conv = Vec::new();
            let mut fc = None;
            let mut head_raw = None;
            let mut head_q = None;
            for (a, per, data) in &layers {
                let t = Tensor::new(a.shape.clone(), data[i * per..(i + 1) * per].to_vec())?;
                match a.layer.as_str() {
                    "fc" => fc = Some(t),
                    "head_raw" => head_raw = Some(t),
                    "head_q" => head_q = Some(t),
                    l if l.starts_with("conv") => conv.push(t),
                    other => return Err(Error::Config(format!("unknown activation stream {other:?}"))),
                }
            }
            let missing = |what: &str| Error::MissingStream(dir.join(act_file(what)));
            traces.push(ActivationTrace {
                conv,
                fc: fc.ok_or_else(|| missing("fc"))?,
                head_raw: head_raw.ok_or_else(|| missing("head_raw"))?,
                head_q: head_q.ok_or_else(|| missing("head_q"))?,
                chosen_action,
            });
        }
        Some(traces)
    };

    let meta = RolloutMeta {
        model: manifest.model,
        env_id: manifest.env_id,
        seed: manifest.seed,
        policy_mode: manifest.policy_mode,
        max_steps: manifest.max_steps,
    };
    Ok(Rollout { meta, steps, traces })
}
