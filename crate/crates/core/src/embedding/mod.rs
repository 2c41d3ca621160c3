//! PCA and t-SNE embeddings of RAM states and hidden activations, and the
//! export consumed by the explorer UI.

mod pca;
mod tsne;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pca::{pca_reduce, Pca, DEFAULT_PCA_DIMS};
pub use tsne::{conditional_affinities, joint_affinities, tsne, TsneConfig, TsneResult};

use crate::env::{Rollout, RAM_BYTES};
use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::nn::ActivationTrace;
use crate::tensor::Tensor;
use crate::viz::RgbImage;

pub const EMBEDDING_FILE: &str = "embedding.json";
pub const FRAMES_DIR: &str = "frames";

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub pca_dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams { pca_dims: DEFAULT_PCA_DIMS, perplexity: 30.0, iterations: 3000, seed: 0 }
    }
}

impl EmbeddingParams {
    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig { perplexity: self.perplexity, iterations: self.iterations, seed: self.seed, ..TsneConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Series {
    pub algorithm: String,
    pub run_id: String,
    pub color_hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub x: f64,
    pub y: f64,
    pub series_index: usize,
    pub step: usize,
    pub score: f64,
    pub frame_ref: String,
}

/// Which rollout and step a point came from. Not exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointSource {
    pub rollout: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub params: EmbeddingParams,
    pub series: Vec<Series>,
    pub points: Vec<EmbeddingPoint>,
    #[serde(skip)]
    pub sources: Vec<PointSource>,
    #[serde(skip)]
    pub initial_kl: f64,
    #[serde(skip)]
    pub final_kl: f64,
}

fn frame_ref(i: usize) -> String {
    format!("{FRAMES_DIR}/{i:06}.png")
}

/// PCA followed by t-SNE on the rows of `features`.
pub fn embed_features(features: &DMatrix<f64>, params: &EmbeddingParams) -> Result<TsneResult> {
    let cfg = params.tsne_config();
    if (features.nrows() as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::TooFewPoints { n: features.nrows(), perplexity: cfg.perplexity });
    }
    let reduced = pca_reduce(features, params.pca_dims)?;
    tsne(&reduced.projected, &cfg)
}

fn assemble(
    rollouts: &[&Rollout],
    series_of: &[usize],
    series: Vec<Series>,
    params: &EmbeddingParams,
    features: &DMatrix<f64>,
) -> Result<EmbeddingResult> {
    let t = embed_features(features, params)?;
    let mut points = Vec::with_capacity(features.nrows());
    let mut sources = Vec::with_capacity(features.nrows());
    for (r, rollout) in rollouts.iter().enumerate() {
        for (step, rec) in rollout.steps.iter().enumerate() {
            let i = points.len();
            let [x, y] = t.coords[i];
            points.push(EmbeddingPoint { x, y, series_index: series_of[r], step, score: rec.score, frame_ref: frame_ref(i) });
            sources.push(PointSource { rollout: r, step });
        }
    }
    Ok(EmbeddingResult { params: *params, series, points, sources, initial_kl: t.initial_kl, final_kl: t.final_kl })
}

/// Distinct `(algorithm, run_id)` groups in order of first appearance.
fn series_for(rollouts: &[&Rollout]) -> (Vec<Series>, Vec<usize>) {
    let mut series: Vec<Series> = Vec::new();
    let mut index = Vec::with_capacity(rollouts.len());
    for r in rollouts {
        let alg = r.meta.model.algorithm.as_str().to_string();
        let run = r.meta.model.run_id.clone();
        let pos = series.iter().position(|s| s.algorithm == alg && s.run_id == run).unwrap_or_else(|| {
            series.push(Series { algorithm: alg, run_id: run, color_hint: PALETTE[series.len() % PALETTE.len()].into() });
            series.len() - 1
        });
        index.push(pos);
    }
    (series, index)
}

/// 1024 RAM bits per step, stacked over every rollout.
pub fn ram_features(rollouts: &[&Rollout]) -> DMatrix<f64> {
    let n: usize = rollouts.iter().map(|r| r.len()).sum();
    let bits: Vec<f64> = rollouts.iter().flat_map(|r| r.steps.iter()).flat_map(|s| s.ram.bits()).collect();
    DMatrix::from_row_slice(n, RAM_BYTES * 8, &bits)
}

/// One joint embedding of the RAM states of all rollouts.
pub fn embed_ram_joint(rollouts: &[&Rollout], params: &EmbeddingParams) -> Result<EmbeddingResult> {
    if rollouts.is_empty() {
        return Err(Error::Empty("rollouts"));
    }
    let (series, index) = series_for(rollouts);
    assemble(rollouts, &index, series, params, &ram_features(rollouts))
}

/// Network layer whose activations are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layer {
    /// One-based conv layer index.
    Conv(usize),
    #[default]
    Fc,
    /// Per-action outputs.
    Output,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Conv(i) => write!(f, "conv{i}"),
            Layer::Fc => f.write_str("fc"),
            Layer::Output => f.write_str("output"),
        }
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(Layer::Fc),
            "output" | "q" => Ok(Layer::Output),
            _ => s
                .strip_prefix("conv")
                .and_then(|i| i.parse().ok())
                .filter(|&i| i >= 1)
                .map(Layer::Conv)
                .ok_or_else(|| Error::InvalidLayer(s.to_string())),
        }
    }
}

impl Layer {
    pub fn select<'a>(&self, trace: &'a ActivationTrace) -> Result<&'a Tensor> {
        match *self {
            Layer::Conv(i) => trace.conv.get(i.wrapping_sub(1)).ok_or_else(|| Error::InvalidLayer(self.to_string())),
            Layer::Fc => Ok(&trace.fc),
            Layer::Output => Ok(&trace.head_q),
        }
    }
}

/// Activation traces for every step: the cached ones when present,
/// otherwise recomputed from the observations.
pub fn rollout_traces<'a>(model: &FrozenModel, rollout: &'a Rollout) -> Result<std::borrow::Cow<'a, [ActivationTrace]>> {
    if let Some(t) = &rollout.traces {
        return Ok(std::borrow::Cow::Borrowed(t.as_slice()));
    }
    let net = model.to_net()?;
    let traces = rollout.steps.par_iter().map(|s| net.trace(&s.obs)).collect::<Result<Vec<_>>>()?;
    Ok(std::borrow::Cow::Owned(traces))
}

/// Embedding of one model's activations at `layer` over a rollout.
pub fn embed_hidden(model: &FrozenModel, rollout: &Rollout, layer: Layer, params: &EmbeddingParams) -> Result<EmbeddingResult> {
    if let Layer::Conv(i) = layer {
        if i == 0 || i > model.spec.conv_layers.len() {
            return Err(Error::InvalidLayer(layer.to_string()));
        }
    }
    let cfg = params.tsne_config();
    if (rollout.len() as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::TooFewPoints { n: rollout.len(), perplexity: cfg.perplexity });
    }
    let traces = rollout_traces(model, rollout)?;
    let rows = traces.iter().map(|t| layer.select(t)).collect::<Result<Vec<_>>>()?;
    let d = rows[0].len();
    let data: Vec<f64> = rows.iter().flat_map(|t| t.data().iter().map(|&v| f64::from(v))).collect();
    let features = DMatrix::from_row_slice(rows.len(), d, &data);
    let (series, index) = series_for(&[rollout]);
    assemble(&[rollout], &index, series, params, &features)
}

/// Writes `embedding.json` and one PNG thumbnail of the raw frame behind
/// every point.
pub fn export_embedding(result: &EmbeddingResult, rollouts: &[&Rollout], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if result.sources.len() != result.points.len() {
        return Err(Error::Config("embedding has no frame sources to export".into()));
    }
    fs::create_dir_all(dir.join(FRAMES_DIR))?;
    result.points.par_iter().zip(&result.sources).try_for_each(|(p, src)| {
        let step = rollouts
            .get(src.rollout)
            .and_then(|r| r.steps.get(src.step))
            .ok_or_else(|| Error::Config(format!("point source {src:?} is not among the given rollouts")))?;
        RgbImage::from_frame(&step.frame).save(dir.join(&p.frame_ref))
    })?;
    fs::write(dir.join(EMBEDDING_FILE), serde_json::to_vec(result)?)?;
    Ok(())
}

pub fn load_embedding(dir: impl AsRef<Path>) -> Result<EmbeddingResult> {
    Ok(serde_json::from_slice(&fs::read(dir.as_ref().join(EMBEDDING_FILE))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_names() {
        assert_eq!("conv2".parse::<Layer>().unwrap(), Layer::Conv(2));
        assert_eq!("fc".parse::<Layer>().unwrap(), Layer::Fc);
        assert!("conv0".parse::<Layer>().is_err());
        assert!("pool".parse::<Layer>().is_err());
        assert_eq!(Layer::Conv(3).to_string(), "conv3");
    }
}
