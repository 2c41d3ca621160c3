//! First-layer filter extraction and temporal-bias statistics.

use std::cmp::Ordering;

use crate::env::STACK_DEPTH;
use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::tensor::Tensor;

/// Per-input-channel mean absolute weight, normalized by the present
/// channel. `m[3]` is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalProfile {
    pub m: [f64; STACK_DEPTH],
}

impl TemporalProfile {
    /// Mean of the past-frame magnitudes.
    pub fn present_bias(&self) -> f64 {
        self.m[..STACK_DEPTH - 1].iter().sum::<f64>() / (STACK_DEPTH - 1) as f64
    }
}

fn conv1(model: &FrozenModel) -> Result<&Tensor> {
    let w = model
        .tensor("conv1.w")
        .ok_or_else(|| Error::SpecInconsistency("model has no conv1.w tensor".into()))?;
    if w.shape().len() != 4 || w.shape()[1] != STACK_DEPTH {
        return Err(Error::shape("conv1.w", format!("[out, {STACK_DEPTH}, k, k]"), format!("{:?}", w.shape())));
    }
    Ok(w)
}

/// One `[4, k, k]` slice per conv1 output channel, borrowed from the model.
pub fn first_layer_filters(model: &FrozenModel) -> Result<Vec<&[f32]>> {
    let w = conv1(model)?;
    let per = w.shape()[1..].iter().product::<usize>();
    Ok(w.data().chunks_exact(per).collect())
}

pub fn temporal_profile_of(weights: &Tensor) -> Result<TemporalProfile> {
    let s = weights.shape();
    if s.len() != 4 || s[1] != STACK_DEPTH {
        return Err(Error::shape("temporal_profile", format!("[out, {STACK_DEPTH}, k, k]"), format!("{s:?}")));
    }
    let area = s[2] * s[3];
    let mut sums = [0.0f64; STACK_DEPTH];
    for filter in weights.data().chunks_exact(STACK_DEPTH * area) {
        for (t, chan) in filter.chunks_exact(area).enumerate() {
            sums[t] += chan.iter().map(|&v| f64::from(v).abs()).sum::<f64>();
        }
    }
    let present = sums[STACK_DEPTH - 1];
    if present == 0.0 {
        return Err(Error::DegenerateFilter);
    }
    // equal counts per channel, so the ratio of sums is the ratio of means
    let mut m = [0.0; STACK_DEPTH];
    for t in 0..STACK_DEPTH {
        m[t] = sums[t] / present;
    }
    m[STACK_DEPTH - 1] = 1.0;
    Ok(TemporalProfile { m })
}

pub fn temporal_profile(model: &FrozenModel) -> Result<TemporalProfile> {
    temporal_profile_of(conv1(model)?)
}

pub fn present_bias(model: &FrozenModel) -> Result<f64> {
    Ok(temporal_profile(model)?.present_bias())
}

/// Orders `(label, bias)` pairs from most past-reliant to most
/// present-focused. Ties are broken by label.
pub fn rank_biases(mut entries: Vec<(String, f64)>) -> Vec<(String, f64)> {
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    entries
}

pub fn rank_by_present_bias(models: &[FrozenModel]) -> Result<Vec<(String, f64)>> {
    if models.is_empty() {
        return Err(Error::Empty("models"));
    }
    let entries = models.iter().map(|m| Ok((m.meta.label(), present_bias(m)?))).collect::<Result<Vec<_>>>()?;
    Ok(rank_biases(entries))
}
