use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 3000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `N` rows of 2-D coordinates.
    pub coords: Vec<[f64; 2]>,
    pub initial_kl: f64,
    pub final_kl: f64,
}

const ENTROPY_TOL: f64 = 1e-6;
const SEARCH_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(y: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = y.shape();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..d {
                let diff = y[(i, k)] - y[(j, k)];
                s += diff * diff;
            }
            *slot = s;
        }
    });
    out
}

/// Conditional distribution of row `i` for precision `beta`; returns the
/// Shannon entropy in nats.
fn row_distribution(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (p, &d)) in out.iter_mut().zip(dist).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *p;
    }
    let mut h = 0.0;
    for p in out.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            h -= *p * p.ln();
        }
    }
    h
}

/// Row-conditional affinities `p(j|i)` (row-major `N × N`) with each
/// row's Gaussian precision found by bisection on the entropy.
pub fn conditional_affinities(y: &DMatrix<f64>, perplexity: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.nrows();
    check_size(n, perplexity)?;
    let dist = squared_distances(y);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let betas: Vec<f64> = p
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let d = &dist[i * n..(i + 1) * n];
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0;
            for _ in 0..SEARCH_STEPS {
                let h = row_distribution(d, i, beta, row);
                if (h - target).abs() < ENTROPY_TOL {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            row_distribution(d, i, beta, row);
            beta
        })
        .collect();
    Ok((p, betas))
}

/// Symmetrized joint affinities `(p(j|i) + p(i|j)) / 2N`.
pub fn joint_affinities(y: &DMatrix<f64>, perplexity: f64) -> Result<Vec<f64>> {
    let n = y.nrows();
    let (cond, _) = conditional_affinities(y, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    Ok(p)
}

fn check_size(n: usize, perplexity: f64) -> Result<()> {
    if !(perplexity > 0.0) {
        return Err(Error::Config("perplexity must be positive".into()));
    }
    if (n as f64) <= 3.0 * perplexity {
        return Err(Error::TooFewPoints { n, perplexity });
    }
    Ok(())
}

/// Student-t kernel values (row-major, zero diagonal) and their total.
fn kernel(coords: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = coords.len();
    let mut num = vec![0.0; n * n];
    let row_sums: Vec<f64> = num
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let mut s = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    let dx = coords[i][0] - coords[j][0];
                    let dy = coords[i][1] - coords[j][1];
                    *v = 1.0 / (1.0 + dx * dx + dy * dy);
                    s += *v;
                }
            }
            s
        })
        .collect();
    (num, row_sums.iter().sum())
}

fn kl_divergence(p: &[f64], coords: &[[f64; 2]]) -> f64 {
    let n = coords.len();
    let (num, total) = kernel(coords);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                let q = (num[i * n + j] / total).max(P_FLOOR);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Exact-gradient t-SNE of the rows of `y` into two dimensions.
pub fn tsne(y: &DMatrix<f64>, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = y.nrows();
    check_size(n, cfg.perplexity)?;
    let p = joint_affinities(y, cfg.perplexity)?;

    let normal = Normal::new(0.0, 1e-2).expect("positive std");
    let mut rng = rng_for(cfg.seed, streams::INIT, 0);
    let mut coords: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let initial_kl = kl_divergence(&p, &coords);

    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.momentum } else { cfg.final_momentum };
        let (num, total) = kernel(&coords);
        grad.par_iter_mut().enumerate().for_each(|(i, g)| {
            let mut acc = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let m = (exaggeration * p[i * n + j] - w / total) * w;
                acc[0] += m * (coords[i][0] - coords[j][0]);
                acc[1] += m * (coords[i][1] - coords[j][1]);
            }
            *g = [4.0 * acc[0], 4.0 * acc[1]];
        });
        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_sign { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(MIN_GAIN);
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                coords[i][k] += velocity[i][k];
            }
        }
        let mut centre = [0.0; 2];
        for c in &coords {
            centre[0] += c[0];
            centre[1] += c[1];
        }
        for c in coords.iter_mut() {
            c[0] -= centre[0] / n as f64;
            c[1] -= centre[1] / n as f64;
        }
    }
    let final_kl = kl_divergence(&p, &coords);
    Ok(TsneResult { coords, initial_kl, final_kl })
}
