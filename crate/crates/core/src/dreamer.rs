//! Activation maximization: gradient ascent on the input under jitter,
//! total-variation and L1 regularization.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::nn::{Adam, Net, Objective};
use crate::rng::{rng_for, streams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ascent {
    #[default]
    Adam,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DreamConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// Largest circular shift, in pixels, along each axis.
    pub jitter_max: usize,
    pub lambda_tv: f64,
    pub lambda_l1: f64,
    pub seed: u64,
    pub ascent: Ascent,
}

impl Default for DreamConfig {
    fn default() -> Self {
        DreamConfig { iterations: 512, step_size: 0.05, jitter_max: 4, lambda_tv: 0.0, lambda_l1: 0.0, seed: 0, ascent: Ascent::Adam }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dream {
    pub input: Tensor,
    /// Regularized objective at every iterate, starting with the
    /// initialization (`iterations + 1` values).
    pub history: Vec<f64>,
    /// Unregularized activation of the final input.
    pub activation: f64,
}

/// Parses `conv<L>:<C>`, `conv<L>:<C>:<Y>:<X>`, `fc:<I>` or `out:<A>`.
impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Objective(format!("cannot parse objective {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        match parts[0] {
            "fc" if parts.len() == 2 => Ok(Objective::FcUnit(num(1)?)),
            "out" | "q" if parts.len() == 2 => Ok(Objective::Output(num(1)?)),
            p if p.starts_with("conv") => {
                let layer = p[4..].parse().map_err(|_| bad())?;
                match parts.len() {
                    2 => Ok(Objective::ConvChannel { layer, channel: num(1)? }),
                    4 => Ok(Objective::ConvUnit { layer, channel: num(1)?, y: num(2)?, x: num(3)? }),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

/// Anisotropic total variation summed over channels of a `[c, h, w]` tensor.
pub fn total_variation(x: &Tensor) -> Result<f64> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::shape("total_variation", "[c, h, w]", format!("{s:?}")));
    }
    Ok(tv_f64(&x.to_f64(), [s[0], s[1], s[2]]))
}

fn tv_f64(x: &[f64], [c, h, w]: [usize; 3]) -> f64 {
    let mut tv = 0.0;
    for ch in 0..c {
        let m = &x[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                let v = m[y * w + xx];
                if y + 1 < h {
                    tv += (m[(y + 1) * w + xx] - v).abs();
                }
                if xx + 1 < w {
                    tv += (m[y * w + xx + 1] - v).abs();
                }
            }
        }
    }
    tv
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds `scale * ∂TV/∂x` (a subgradient, 0 at kinks) into `grad`.
fn add_tv_gradient(x: &[f64], [c, h, w]: [usize; 3], scale: f64, grad: &mut [f64]) {
    for ch in 0..c {
        let o = ch * h * w;
        for y in 0..h {
            for xx in 0..w {
                let i = o + y * w + xx;
                if y + 1 < h {
                    let s = sign(x[i + w] - x[i]) * scale;
                    grad[i + w] += s;
                    grad[i] -= s;
                }
                if xx + 1 < w {
                    let s = sign(x[i + 1] - x[i]) * scale;
                    grad[i + 1] += s;
                    grad[i] -= s;
                }
            }
        }
    }
}

/// Circular shift of every channel by `(dy, dx)`.
fn roll(x: &[f64], [c, h, w]: [usize; 3], dy: isize, dx: isize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let (hh, ww) = (h as isize, w as isize);
    for ch in 0..c {
        let o = ch * h * w;
        for y in 0..h {
            let ty = (y as isize + dy).rem_euclid(hh) as usize;
            for xx in 0..w {
                let tx = (xx as isize + dx).rem_euclid(ww) as usize;
                out[o + ty * w + tx] = x[o + y * w + xx];
            }
        }
    }
    out
}

/// Value and input gradient of
/// `activation(shift(x)) - λ_tv TV(x) - λ_l1 |x|₁`.
pub fn composite_gradient(
    net: &Net,
    x: &[f64],
    objective: &Objective,
    lambda_tv: f64,
    lambda_l1: f64,
    shift: (isize, isize),
) -> Result<(f64, Vec<f64>)> {
    let dims = net.spec().input;
    let shifted = roll(x, dims, shift.0, shift.1);
    let (act, g_shifted) = net.input_gradient_f64(&shifted, objective)?;
    let mut grad = roll(&g_shifted, dims, -shift.0, -shift.1);
    let mut value = act;
    if lambda_tv != 0.0 {
        value -= lambda_tv * tv_f64(x, dims);
        add_tv_gradient(x, dims, -lambda_tv, &mut grad);
    }
    if lambda_l1 != 0.0 {
        value -= lambda_l1 * x.iter().map(|v| v.abs()).sum::<f64>();
        for (g, &v) in grad.iter_mut().zip(x) {
            *g -= lambda_l1 * sign(v);
        }
    }
    Ok((value, grad))
}

fn composite_value(net: &Net, x: &[f64], objective: &Objective, cfg: &DreamConfig) -> Result<(f64, f64)> {
    let fwd = net.forward(x)?;
    let act = net.objective_value(&fwd, objective);
    let dims = net.spec().input;
    let reg = cfg.lambda_tv * tv_f64(x, dims) + cfg.lambda_l1 * x.iter().map(|v| v.abs()).sum::<f64>();
    Ok((act - reg, act))
}

pub fn synthesize(model: &FrozenModel, objective: &Objective, cfg: &DreamConfig) -> Result<Dream> {
    synthesize_with_net(&model.to_net()?, objective, cfg)
}

pub fn synthesize_with_net(net: &Net, objective: &Objective, cfg: &DreamConfig) -> Result<Dream> {
    net.check_objective(objective)?;
    let valid = cfg.iterations >= 1 && cfg.step_size >= 0.0 && cfg.lambda_tv >= 0.0 && cfg.lambda_l1 >= 0.0;
    if !valid {
        return Err(Error::Config("dream needs iterations >= 1 and non-negative step size and penalties".into()));
    }
    let dims = net.spec().input;
    let n: usize = dims.iter().product();
    let mut init_rng = rng_for(cfg.seed, streams::INIT, 0);
    let mut x: Vec<f64> = (0..n).map(|_| f64::from(init_rng.random_range(0.4f32..0.6f32))).collect();
    let mut jitter_rng = rng_for(cfg.seed, streams::JITTER, 0);
    let j = cfg.jitter_max as i64;
    let mut adam = Adam::new(n, cfg.step_size);
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        let shift = if j > 0 {
            (jitter_rng.random_range(-j..=j) as isize, jitter_rng.random_range(-j..=j) as isize)
        } else {
            (0, 0)
        };
        if shift != (0, 0) {
            history.push(composite_value(net, &x, objective, cfg)?.0);
        }
        let (value, grad) = composite_gradient(net, &x, objective, cfg.lambda_tv, cfg.lambda_l1, shift)?;
        if shift == (0, 0) {
            history.push(value);
        }
        match cfg.ascent {
            Ascent::Adam => {
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                adam.step(&mut x, &neg);
            }
            Ascent::Plain => x.iter_mut().zip(&grad).for_each(|(v, g)| *v += cfg.step_size * g),
        }
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let (last, activation) = composite_value(net, &x, objective, cfg)?;
    history.push(last);
    Ok(Dream { input: Tensor::from_f64(&dims, &x), history, activation })
}
