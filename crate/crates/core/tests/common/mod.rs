#![allow(dead_code)]

use azoo_core::env::{record_rollout, Rollout, RolloutConfig, ToyConfig, ToyEnv};
use azoo_core::model::{Algorithm, FrozenModel, ModelMeta};
use azoo_core::nn::{ConvLayerSpec, HeadKind, Net, NetworkSpec, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const HEADS: [HeadKind; 4] = [HeadKind::Q, HeadKind::Dueling, HeadKind::C51, HeadKind::ActorCritic];

/// Small random architecture: 1-3 conv layers over a 1-3 channel input.
pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    loop {
        let c = rng.random_range(1..=3);
        let side = rng.random_range(8..=14);
        let depth = rng.random_range(1..=3);
        let mut layers = Vec::new();
        let mut s = side;
        for _ in 0..depth {
            let k = rng.random_range(2..=4).min(s);
            let stride = rng.random_range(1..=2);
            if s < k {
                break;
            }
            s = (s - k) / stride + 1;
            layers.push(ConvLayerSpec::new(rng.random_range(2..=4), k, stride));
        }
        if layers.is_empty() {
            continue;
        }
        let head = HEADS[rng.random_range(0..4)];
        let mut spec = NetworkSpec {
            input: [c, side, side],
            conv_layers: layers,
            fc_width: rng.random_range(3..=8),
            head,
            n_actions: rng.random_range(2..=5),
            c51: None,
        };
        if head == HeadKind::C51 {
            spec.c51 = Some(azoo_core::nn::C51Params { n_atoms: rng.random_range(3..=7), v_min: -2.0, v_max: 3.0 });
        }
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

/// He-normal weights plus small random biases so ReLU patterns are mixed.
pub fn random_net(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Net {
    let mut net = Net::random(spec, rng.random()).unwrap();
    let slots: Vec<_> = net.layout().to_vec();
    for s in slots {
        if s.name.ends_with(".b") {
            for p in &mut net.params_mut()[s.range()] {
                *p = rng.random_range(-0.1..0.1);
            }
        }
    }
    net
}

pub fn random_objective(net: &Net, rng: &mut ChaCha8Rng) -> Objective {
    let shapes = net.conv_shapes();
    match rng.random_range(0..4) {
        0 => {
            let layer = rng.random_range(1..=shapes.len());
            let [c, h, w] = shapes[layer - 1];
            Objective::ConvUnit { layer, channel: rng.random_range(0..c), y: rng.random_range(0..h), x: rng.random_range(0..w) }
        }
        1 => {
            let layer = rng.random_range(1..=shapes.len());
            Objective::ConvChannel { layer, channel: rng.random_range(0..shapes[layer - 1][0]) }
        }
        2 => Objective::FcUnit(rng.random_range(0..net.spec().fc_width)),
        _ => Objective::Output(rng.random_range(0..net.spec().n_actions)),
    }
}

pub fn random_input(net: &Net, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n: usize = net.spec().input.iter().product();
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

pub fn value(net: &Net, x: &[f64], obj: &Objective) -> f64 {
    let fwd = net.forward(x).unwrap();
    net.objective_value(&fwd, obj)
}

/// `|a - n| / max(|a|, |n|)`, or the absolute difference when both are
/// tiny.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-6 {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

pub fn toy_model(head: HeadKind, seed: u64) -> FrozenModel {
    FrozenModel::random(NetworkSpec::nature(head, 4), ModelMeta::new("toy-catch", Algorithm::Dqn, format!("run{seed}")), seed)
        .unwrap()
}

pub fn toy_rollout(model: &FrozenModel, steps: usize, seed: u64, capture: bool) -> Rollout {
    let mut env = ToyEnv::new(ToyConfig::default());
    let cfg = RolloutConfig { max_steps: steps, seed, capture_activations: capture, ..Default::default() };
    record_rollout(model, &mut env, &cfg).unwrap()
}

/// 84×84 stripe textures: class 0 horizontal, class 1 vertical, class 2
/// checkerboard. Phase and noise come from `(class, index)`.
pub fn texture(class: usize, index: usize) -> Vec<f32> {
    let mut r = rng(((class as u64) << 32) | index as u64);
    let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
    let period: f64 = r.random_range(6.0..12.0);
    let mut out = Vec::with_capacity(84 * 84);
    for y in 0..84 {
        for x in 0..84 {
            let (fy, fx) = (y as f64, x as f64);
            let k = std::f64::consts::TAU / period;
            let v = match class {
                0 => (k * fy + phase).sin(),
                1 => (k * fx + phase).sin(),
                _ => (k * fx + phase).sin() * (k * fy).sin(),
            };
            let noise: f64 = r.random_range(-0.15..0.15);
            out.push((0.5 + 0.35 * v + noise).clamp(0.0, 1.0) as f32);
        }
    }
    out
}

pub fn texture_dataset(classes: usize, per_class: usize, seed: u64) -> azoo_core::distinguisher::FrameDataset {
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for i in 0..per_class {
            frames.push(texture(c, i));
            labels.push(c);
        }
    }
    let names = (0..classes).map(|c| format!("class{c}")).collect();
    azoo_core::distinguisher::FrameDataset::new(frames, labels, names, seed).unwrap()
}

/// Default-architecture net with non-negative conv weights and zero
/// biases, so every unit stays active on a positive input.
pub fn positive_nature_net(seed: u64) -> Net {
    let mut net = Net::random(NetworkSpec::nature(HeadKind::Q, 4), seed).unwrap();
    let slots: Vec<_> = net.layout().to_vec();
    for s in slots {
        for p in &mut net.params_mut()[s.range()] {
            *p = if s.name.ends_with(".b") { 0.0 } else { p.abs() };
        }
    }
    net
}

/// Observed influence region of one conv unit: bounding box of the input
/// pixels whose perturbation changed it, plus how many did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Influence {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub count: usize,
}

/// Pixel-perturbation oracle: bumps every present-channel pixel in turn and
/// records which of the requested units `(layer, channel, y, x)` move.
pub fn perturbation_oracle(net: &Net, units: &[(usize, usize, usize, usize)]) -> Vec<Influence> {
    let [c, h, w] = net.spec().input;
    let depth = units.iter().map(|u| u.0).max().unwrap();
    let shapes = net.conv_shapes();
    let mut r = rng(99);
    let input: Vec<f64> = (0..c * h * w).map(|_| r.random_range(0.2..0.8)).collect();
    let base = net.conv_pre_activations(&input, depth).unwrap();
    let flat = |&(l, ch, y, x): &(usize, usize, usize, usize)| {
        let [_, lh, lw] = shapes[l - 1];
        (l - 1, (ch * lh + y) * lw + x)
    };
    let idx: Vec<(usize, usize)> = units.iter().map(flat).collect();
    let mut out = vec![Influence { x0: usize::MAX, y0: usize::MAX, x1: 0, y1: 0, count: 0 }; units.len()];
    let offset = (c - 1) * h * w;
    let mut x = input.clone();
    for py in 0..h {
        for px in 0..w {
            let p = offset + py * w + px;
            x[p] += 0.5;
            let pre = net.conv_pre_activations(&x, depth).unwrap();
            x[p] = input[p];
            for (inf, &(l, i)) in out.iter_mut().zip(&idx) {
                if pre[l][i] != base[l][i] {
                    inf.x0 = inf.x0.min(px);
                    inf.y0 = inf.y0.min(py);
                    inf.x1 = inf.x1.max(px + 1);
                    inf.y1 = inf.y1.max(py + 1);
                    inf.count += 1;
                }
            }
        }
    }
    out
}

/// 20 random units per conv layer of the default architecture.
pub fn sample_units(seed: u64) -> Vec<(usize, usize, usize, usize)> {
    let shapes = NetworkSpec::nature(HeadKind::Q, 4).conv_shapes().unwrap();
    let mut r = rng(seed);
    let mut units = Vec::new();
    for (l, [c, h, w]) in shapes.into_iter().enumerate() {
        for _ in 0..20 {
            units.push((l + 1, r.random_range(0..c), r.random_range(0..h), r.random_range(0..w)));
        }
    }
    units
}

pub struct Outcome {
    pub max_rel: f64,
    pub checked: usize,
}

/// Analytic input and parameter gradients of one random case against
/// central differences, skipping coordinates whose nudge flips a ReLU.
pub fn gradient_case(seed: u64) -> Outcome {
    let mut rng = self::rng(seed);
    let spec = random_spec(&mut rng);
    let mut net = random_net(spec, &mut rng);
    let obj = random_objective(&net, &mut rng);
    let x = random_input(&net, &mut rng);
    let h = 1e-3;
    let base_pattern = net.forward(&x).unwrap().relu_pattern();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;

    let (_, grad) = net.input_gradient_f64(&x, &obj).unwrap();
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        if net.forward(&xp).unwrap().relu_pattern() != base_pattern || net.forward(&xm).unwrap().relu_pattern() != base_pattern {
            continue;
        }
        let fd = (value(&net, &xp, &obj) - value(&net, &xm, &obj)) / (2.0 * h);
        max_rel = max_rel.max(rel_err(grad[i], fd));
        checked += 1;
    }

    let pgrad = net.objective_param_gradient(&x, &obj).unwrap();
    let n = net.params().len();
    let coords: Vec<usize> = if n <= 300 { (0..n).collect() } else { (0..300).map(|_| rng.random_range(0..n)).collect() };
    for i in coords {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let (fp, pp) = (value(&net, &x, &obj), net.forward(&x).unwrap().relu_pattern());
        net.params_mut()[i] = orig - h;
        let (fm, pm) = (value(&net, &x, &obj), net.forward(&x).unwrap().relu_pattern());
        net.params_mut()[i] = orig;
        if pp != base_pattern || pm != base_pattern {
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        max_rel = max_rel.max(rel_err(pgrad[i], fd));
        checked += 1;
    }
    Outcome { max_rel, checked }
}

/// Cyclic Jacobi eigen-decomposition; columns of the returned matrix are
/// eigenvectors.
pub fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Three Gaussian blobs in `d` dimensions, ten standard deviations apart.
pub fn clusters(n_per: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for c in 0..3 {
        for _ in 0..n_per {
            labels.push(c);
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut r);
                rows.push(z + if j == c { 10.0 } else { 0.0 });
            }
        }
    }
    (DMatrix::from_row_slice(3 * n_per, d, &rows), labels)
}

/// Lloyd's k-means with farthest-point seeding, then majority-label purity.
pub fn purity(coords: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut centres = vec![coords[0]];
    while centres.len() < k {
        let far = coords
            .iter()
            .max_by(|a, b| {
                let da = centres.iter().map(|c| d2(**a, *c)).fold(f64::INFINITY, f64::min);
                let db = centres.iter().map(|c| d2(**b, *c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centres.push(*far);
    }
    let mut assign = vec![0; coords.len()];
    for _ in 0..100 {
        for (a, p) in assign.iter_mut().zip(coords) {
            *a = (0..k).min_by(|&i, &j| d2(*p, centres[i]).total_cmp(&d2(*p, centres[j]))).unwrap();
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&[f64; 2]> = coords.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let m = members.len() as f64;
                *centre = [members.iter().map(|p| p[0]).sum::<f64>() / m, members.iter().map(|p| p[1]).sum::<f64>() / m];
            }
        }
    }
    let n_labels = labels.iter().max().unwrap() + 1;
    let mut hits = 0;
    for c in 0..k {
        let mut counts = vec![0; n_labels];
        for (&a, &l) in assign.iter().zip(labels) {
            if a == c {
                counts[l] += 1;
            }
        }
        hits += counts.iter().max().unwrap();
    }
    hits as f64 / coords.len() as f64
}

/// Best objective value over 100 uniform random inputs.
pub fn best_random(net: &azoo_core::Net, obj: &Objective, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n: usize = net.spec().input.iter().product();
    (0..100)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
            value(net, &x, obj)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
