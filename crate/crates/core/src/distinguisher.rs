//! Frame classifier that tries to tell which algorithm produced a frame,
//! plus confusion-matrix and F1 bookkeeping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{present_channel, Rollout, OBS_SIZE};
use crate::error::{Error, Result};
use crate::nn::{ConvLayerSpec, HeadKind, Net, NetworkSpec};
use crate::rng::{derive_seed, rng_for, streams};

pub const DEFAULT_FRAMES_PER_MODEL: usize = 2501;
pub const TEST_FRACTION: f64 = 0.2;
pub const VAL_FRACTION: f64 = 0.1;
const FRAME_LEN: usize = OBS_SIZE * OBS_SIZE;

/// Single-channel 84×84 frames with stratified train/val/test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    pub frames: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FrameDataset {
    /// Splits each class independently: `floor(0.2 n)` frames go to test,
    /// `floor(0.1 m)` of the remaining `m` to validation, the rest to train.
    pub fn new(frames: Vec<Vec<f32>>, labels: Vec<usize>, class_names: Vec<String>, seed: u64) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        if frames.len() != labels.len() {
            return Err(Error::shape("FrameDataset", format!("{} labels", frames.len()), labels.len().to_string()));
        }
        for f in &frames {
            if f.len() != FRAME_LEN {
                return Err(Error::shape("FrameDataset", format!("{FRAME_LEN} pixels"), f.len().to_string()));
            }
        }
        let classes = class_names.len();
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::LabelOutOfRange { label: l, classes });
            }
            by_class[l].push(i);
        }
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (c, mut idx) in by_class.into_iter().enumerate() {
            idx.shuffle(&mut rng_for(seed, streams::SPLIT, c as u64));
            let n_test = (idx.len() as f64 * TEST_FRACTION).floor() as usize;
            let rest = idx.len() - n_test;
            let n_val = (rest as f64 * VAL_FRACTION).floor() as usize;
            test.extend_from_slice(&idx[..n_test]);
            val.extend_from_slice(&idx[n_test..n_test + n_val]);
            train.extend_from_slice(&idx[n_test + n_val..]);
        }
        Ok(FrameDataset { frames, labels, class_names, train, val, test })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class sample counts in the test split.
    pub fn test_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &i in &self.test {
            counts[self.labels[i]] += 1;
        }
        counts
    }
}

/// A rollout tagged with the class (algorithm) that produced it.
#[derive(Debug, Clone, Copy)]
pub struct LabeledRollout<'a> {
    pub class: &'a str,
    pub rollout: &'a Rollout,
}

/// Takes the first `frames_per_model` present-channel frames of every
/// model, where a model may contribute several rollouts. Classes are sorted
/// by name.
pub fn build_dataset(rollouts: &[LabeledRollout<'_>], frames_per_model: usize, seed: u64) -> Result<FrameDataset> {
    let mut models: BTreeMap<&str, BTreeMap<String, Vec<&Rollout>>> = BTreeMap::new();
    for r in rollouts {
        models.entry(r.class).or_default().entry(r.rollout.meta.model.label()).or_default().push(r.rollout);
    }
    let class_names: Vec<String> = models.keys().map(|s| s.to_string()).collect();
    let groups: Vec<(usize, &str, &Vec<&Rollout>)> = models
        .values()
        .enumerate()
        .flat_map(|(c, m)| m.iter().map(move |(label, rs)| (c, label.as_str(), rs)))
        .collect();
    let per_model: Vec<Vec<Vec<f32>>> = groups
        .par_iter()
        .map(|&(c, label, rs)| {
            let frames: Vec<Vec<f32>> = rs
                .iter()
                .flat_map(|r| r.steps.iter())
                .take(frames_per_model)
                .map(|s| present_channel(&s.obs).to_vec())
                .collect();
            if frames.len() < frames_per_model {
                return Err(Error::InsufficientData {
                    class: format!("{} ({label})", class_names[c]),
                    needed: frames_per_model,
                    available: frames.len(),
                });
            }
            Ok(frames)
        })
        .collect::<Result<_>>()?;
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for ((c, _, _), fs) in groups.iter().zip(per_model) {
        labels.extend(std::iter::repeat_n(*c, fs.len()));
        frames.extend(fs);
    }
    FrameDataset::new(frames, labels, class_names, seed)
}

pub fn classifier_spec(n_classes: usize) -> NetworkSpec {
    NetworkSpec {
        input: [1, OBS_SIZE, OBS_SIZE],
        conv_layers: vec![ConvLayerSpec::new(16, 8, 4), ConvLayerSpec::new(32, 4, 2)],
        fc_width: 256,
        head: HeadKind::Q,
        n_actions: n_classes,
        c51: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_epochs: 50, patience: 5, lr: 1e-4, batch_size: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Net,
    pub class_names: Vec<String>,
    pub history: Vec<EpochStats>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl Classifier {
    pub fn predict(&self, frame: &[f32]) -> Result<usize> {
        let input: Vec<f64> = frame.iter().map(|&v| f64::from(v)).collect();
        Ok(self.net.forward(&input)?.greedy_action())
    }

    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch].val_loss
    }
}

fn to_f64(ds: &FrameDataset, idx: &[usize]) -> Vec<(Vec<f64>, usize)> {
    idx.iter().map(|&i| (ds.frames[i].iter().map(|&v| f64::from(v)).collect(), ds.labels[i])).collect()
}

fn mean_loss(net: &Net, ds: &FrameDataset, idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let owned = to_f64(ds, chunk);
        let batch: Vec<(&[f64], usize)> = owned.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
        total += net.cross_entropy(&batch)? * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Adam on mean cross-entropy with early stopping on validation loss; the
/// best epoch's weights are restored. Falls back to the training split for
/// monitoring when the validation split is empty.
pub fn train_classifier(ds: &FrameDataset, cfg: &TrainConfig) -> Result<Classifier> {
    if ds.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch size and epoch count must be positive".into()));
    }
    let mut net = Net::random(classifier_spec(ds.n_classes()), derive_seed(cfg.seed, streams::INIT, 0))?;
    let monitor = if ds.val.is_empty() { &ds.train } else { &ds.val };
    let mut adam = crate::nn::Adam::new(net.params().len(), cfg.lr);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 0..cfg.max_epochs {
        let mut order = ds.train.clone();
        order.shuffle(&mut rng_for(cfg.seed, streams::SHUFFLE, epoch as u64));
        let mut train_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let owned = to_f64(ds, chunk);
            let batch: Vec<(&[f64], usize)> = owned.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
            let (loss, grads) = net.cross_entropy_gradient(&batch)?;
            train_total += loss * chunk.len() as f64;
            adam.step(net.params_mut(), &grads);
        }
        let val_loss = mean_loss(&net, ds, monitor)?;
        history.push(EpochStats { epoch, train_loss: train_total / order.len() as f64, val_loss });
        match &best {
            Some((b, _, _)) if val_loss >= *b => {}
            _ => best = Some((val_loss, epoch, net.params().to_vec())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    net.params_mut().copy_from_slice(&params);
    Ok(Classifier { net, class_names: ds.class_names.clone(), history, best_epoch })
}

/// `counts[i][j]`: frames of class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        ConfusionMatrix { class_names, counts: vec![vec![0; n]; n] }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.n_classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.n_classes()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total().max(1) as f64
    }

    pub fn precision(&self, class: usize) -> f64 {
        let col = self.col_sums()[class];
        if col == 0 {
            0.0
        } else {
            self.counts[class][class] as f64 / col as f64
        }
    }

    pub fn recall(&self, class: usize) -> f64 {
        let row = self.row_sums()[class];
        if row == 0 {
            0.0
        } else {
            self.counts[class][class] as f64 / row as f64
        }
    }

    pub fn f1_scores(&self) -> Vec<f64> {
        (0..self.n_classes()).map(|c| f1_score(self.precision(c), self.recall(c))).collect()
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub f1: Vec<f64>,
    /// Unweighted mean over classes.
    pub mean_f1: f64,
    pub accuracy: f64,
}

pub fn evaluate(classifier: &Classifier, ds: &FrameDataset) -> Result<Evaluation> {
    if ds.test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    if classifier.class_names.len() != ds.n_classes() {
        return Err(Error::ClassSetMismatch);
    }
    let n = ds.n_classes();
    let counts = ds
        .test
        .par_chunks(64)
        .map(|chunk| {
            let mut counts = vec![vec![0u64; n]; n];
            for &i in chunk {
                counts[ds.labels[i]][classifier.predict(&ds.frames[i])?] += 1;
            }
            Ok::<_, Error>(counts)
        })
        .try_reduce(
            || vec![vec![0u64; n]; n],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                Ok(a)
            },
        )?;
    let confusion = ConfusionMatrix { class_names: ds.class_names.clone(), counts };
    let f1 = confusion.f1_scores();
    let mean_f1 = f1.iter().sum::<f64>() / n as f64;
    let accuracy = confusion.accuracy();
    Ok(Evaluation { confusion, f1, mean_f1, accuracy })
}

/// Elementwise sum; with `zero_diagonal` the true positives are cleared so
/// that only confusions remain.
pub fn sum_confusions(matrices: &[ConfusionMatrix], zero_diagonal: bool) -> Result<ConfusionMatrix> {
    let first = matrices.first().ok_or(Error::Empty("confusion matrices"))?;
    let mut out = ConfusionMatrix::zeros(first.class_names.clone());
    for m in matrices {
        if m.class_names != first.class_names {
            return Err(Error::ClassSetMismatch);
        }
        for (ro, rm) in out.counts.iter_mut().zip(&m.counts) {
            for (o, v) in ro.iter_mut().zip(rm) {
                *o += v;
            }
        }
    }
    if zero_diagonal {
        for i in 0..out.n_classes() {
            out.counts[i][i] = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix { class_names: names(counts.len()), counts }
    }

    #[test]
    fn f1_hand_values() {
        assert_eq!(f1_score(1.0, 1.0), 1.0);
        assert!((f1_score(0.6, 0.4) - 0.48).abs() < 1e-12);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn confusion_precision_recall() {
        // class 0: 3 right, 2 wrong; class 1: 2 predicted as 0
        let m = cm(vec![vec![3, 2], vec![2, 8]]);
        assert_eq!(m.precision(0), 0.6);
        assert_eq!(m.recall(0), 0.6);
        assert_eq!(m.row_sums(), vec![5, 10]);
        assert!((m.accuracy() - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn summing_confusions() {
        let a = cm(vec![vec![3, 1], vec![0, 2]]);
        let z = sum_confusions(std::slice::from_ref(&a), true).unwrap();
        assert_eq!(z.counts, vec![vec![0, 1], vec![0, 0]]);
        let d = cm(vec![vec![4, 0], vec![0, 5]]);
        assert_eq!(sum_confusions(&[d.clone(), d.clone()], true).unwrap().counts, vec![vec![0, 0], vec![0, 0]]);
        assert_eq!(sum_confusions(&[a.clone(), d], false).unwrap().counts, vec![vec![7, 1], vec![0, 7]]);
        let other = ConfusionMatrix { class_names: vec!["x".into(), "y".into()], counts: vec![vec![0; 2]; 2] };
        assert!(matches!(sum_confusions(&[a, other], false), Err(Error::ClassSetMismatch)));
    }

    #[test]
    fn split_arithmetic() {
        let frames = vec![vec![0.0; FRAME_LEN]; 2 * 2501];
        let labels = (0..2 * 2501).map(|i| i % 2).collect();
        let ds = FrameDataset::new(frames, labels, names(2), 3).unwrap();
        assert_eq!(ds.test.len(), 1000);
        assert_eq!(ds.test_counts(), vec![500, 500]);
        assert_eq!(ds.val.len(), 2 * 200);
        assert_eq!(ds.train.len() + ds.val.len() + ds.test.len(), 5002);
        let mut all: Vec<usize> = ds.train.iter().chain(&ds.val).chain(&ds.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..5002).collect::<Vec<_>>());
    }

    #[test]
    fn splits_are_seed_stable() {
        let make = |seed| {
            let frames = vec![vec![0.0; FRAME_LEN]; 40];
            FrameDataset::new(frames, (0..40).map(|i| i % 2).collect(), names(2), seed).unwrap()
        };
        assert_eq!(make(1), make(1));
        assert_ne!(make(1).test, make(2).test);
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(FrameDataset::new(vec![], vec![], names(1), 0).is_err());
    }
}
