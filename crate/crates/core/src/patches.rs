//! Receptive-field arithmetic and maximally activating input patches.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{present_channel, Rollout, FRAME_HEIGHT, FRAME_WIDTH, OBS_SIZE};
use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::nn::{Net, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptiveField {
    /// Side length in input pixels.
    pub size: usize,
    /// Input-pixel distance between adjacent units.
    pub jump: usize,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

impl ReceptiveField {
    /// Input rectangle seen by unit `(x, y)`, clipped to `width × height`.
    pub fn rect(&self, x: usize, y: usize, width: usize, height: usize) -> Rect {
        let (x0, y0) = (x * self.jump, y * self.jump);
        Rect {
            x0: x0.min(width),
            y0: y0.min(height),
            x1: (x0 + self.size).min(width),
            y1: (y0 + self.size).min(height),
        }
    }
}

/// `r_l = r_{l-1} + (k_l - 1) j_{l-1}`, `j_l = j_{l-1} s_l`, starting from a
/// single pixel. `layer` counts conv layers from 1.
pub fn receptive_field(spec: &NetworkSpec, layer: usize) -> Result<ReceptiveField> {
    if layer == 0 || layer > spec.conv_layers.len() {
        return Err(Error::InvalidLayer(format!("conv layer {layer} (network has {})", spec.conv_layers.len())));
    }
    let mut rf = ReceptiveField { size: 1, jump: 1 };
    for l in &spec.conv_layers[..layer] {
        rf = ReceptiveField { size: rf.size + (l.kernel - 1) * rf.jump, jump: rf.jump * l.stride };
    }
    Ok(rf)
}

/// Nearest-pixel mapping of an observation rectangle back onto the raw
/// 210×160 frame.
pub fn frame_rect(r: &Rect) -> Rect {
    let sy = FRAME_HEIGHT as f64 / OBS_SIZE as f64;
    let sx = FRAME_WIDTH as f64 / OBS_SIZE as f64;
    Rect {
        x0: (r.x0 as f64 * sx).floor() as usize,
        y0: (r.y0 as f64 * sy).floor() as usize,
        x1: ((r.x1 as f64 * sx).ceil() as usize).min(FRAME_WIDTH),
        y1: ((r.y1 as f64 * sy).ceil() as usize).min(FRAME_HEIGHT),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchHit {
    pub step: usize,
    pub x: usize,
    pub y: usize,
    pub value: f32,
    /// Observation-space rectangle, clipped to 84×84.
    pub rect: Rect,
    /// Present-channel pixels inside `rect`, row-major.
    pub patch: Vec<f32>,
    /// Matching region of the raw RGB frame.
    pub frame_rect: Rect,
}

/// Post-ReLU activation map of one conv channel, `[h * w]`.
pub fn activation_map(net: &Net, obs: &[f32], layer: usize, filter: usize) -> Result<Vec<f32>> {
    let input: Vec<f64> = obs.iter().map(|&v| f64::from(v)).collect();
    let pre = net.conv_pre_activations(&input, layer)?;
    let last = pre.last().ok_or_else(|| Error::InvalidLayer(format!("conv layer {layer}")))?;
    let per = last.len() / net.spec().conv_layers[layer - 1].out_channels;
    Ok(last[filter * per..(filter + 1) * per].iter().map(|&v| v.max(0.0) as f32).collect())
}

fn check_unit(spec: &NetworkSpec, layer: usize, filter: usize) -> Result<()> {
    receptive_field(spec, layer)?;
    let channels = spec.conv_layers[layer - 1].out_channels;
    if filter >= channels {
        return Err(Error::InvalidLayer(format!("filter {filter} of conv{layer} (has {channels})")));
    }
    Ok(())
}

/// Hit ordering: activation descending, then step, row and column ascending.
pub fn hit_order(a: &PatchHit, b: &PatchHit) -> Ordering {
    b.value
        .partial_cmp(&a.value)
        .unwrap_or(Ordering::Equal)
        .then(a.step.cmp(&b.step))
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// The `k` steps whose single strongest unit of `filter` is largest, with
/// the input patch that drove each.
pub fn top_patches(model: &FrozenModel, rollout: &Rollout, layer: usize, filter: usize, k: usize) -> Result<Vec<PatchHit>> {
    check_unit(&model.spec, layer, filter)?;
    let net = model.to_net()?;
    let rf = receptive_field(&model.spec, layer)?;
    let (_, w) = model.spec.conv_output_sizes()?[layer - 1];
    let [_, in_h, in_w] = model.spec.input;
    let mut hits = rollout
        .steps
        .par_iter()
        .enumerate()
        .map(|(step, s)| {
            let map = activation_map(&net, s.obs.data(), layer, filter)?;
            let best = crate::tensor::argmax(&map);
            let (y, x) = (best / w, best % w);
            let rect = rf.rect(x, y, in_w, in_h);
            let present = present_channel(&s.obs);
            let patch = (rect.y0..rect.y1).flat_map(|py| present[py * in_w + rect.x0..py * in_w + rect.x1].iter().copied()).collect();
            Ok(PatchHit { step, x, y, value: map[best], rect, patch, frame_rect: frame_rect(&rect) })
        })
        .collect::<Result<Vec<_>>>()?;
    hits.sort_by(hit_order);
    hits.truncate(k);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HeadKind;

    #[test]
    fn nature_receptive_fields() {
        let spec = NetworkSpec::nature(HeadKind::Q, 4);
        let got: Vec<_> = (1..=3).map(|l| receptive_field(&spec, l).unwrap()).collect();
        assert_eq!(
            got,
            vec![
                ReceptiveField { size: 8, jump: 4 },
                ReceptiveField { size: 20, jump: 8 },
                ReceptiveField { size: 36, jump: 8 }
            ]
        );
        assert!(receptive_field(&spec, 0).is_err());
        assert!(receptive_field(&spec, 4).is_err());
    }

    #[test]
    fn rect_clipping() {
        let rf = ReceptiveField { size: 36, jump: 8 };
        assert_eq!(rf.rect(6, 6, 84, 84), Rect { x0: 48, y0: 48, x1: 84, y1: 84 });
        assert_eq!(rf.rect(0, 0, 84, 84).width(), 36);
    }

    #[test]
    fn frame_rect_covers_full_frame() {
        let full = frame_rect(&Rect { x0: 0, y0: 0, x1: 84, y1: 84 });
        assert_eq!(full, Rect { x0: 0, y0: 0, x1: 160, y1: 210 });
    }
}
