use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::head::{self, HeadOut};
use crate::nn::kernels::{conv_backward, conv_forward, dense_backward, dense_forward, relu_in_place, relu_mask, ConvGeom};
use crate::nn::spec::{HeadKind, NetworkSpec, TensorSlot};
use crate::tensor::{argmax, Tensor};

/// A target for gradient-based probing.
///
/// Conv and fc objectives read the layer's pre-activation (the linear
/// response before ReLU) so that inactive units still receive gradient.
/// Conv layers are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    ConvUnit { layer: usize, channel: usize, y: usize, x: usize },
    /// Mean over the channel's spatial map.
    ConvChannel { layer: usize, channel: usize },
    FcUnit(usize),
    /// Post-head per-action value (`q[a]`).
    Output(usize),
}

/// Per-layer activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    /// Post-ReLU conv outputs, `[c, h, w]` each.
    pub conv: Vec<Tensor>,
    /// Post-ReLU fully-connected output.
    pub fc: Tensor,
    pub head_raw: Tensor,
    pub head_q: Tensor,
    pub chosen_action: usize,
}

/// Cached intermediate values of a forward pass, kept in double precision.
#[derive(Debug, Clone)]
pub struct Forward {
    pub input: Vec<f64>,
    pub conv_pre: Vec<Vec<f64>>,
    pub conv_post: Vec<Vec<f64>>,
    pub fc_pre: Vec<f64>,
    pub fc_post: Vec<f64>,
    pub(crate) head: HeadOut,
}

impl Forward {
    pub fn q(&self) -> &[f64] {
        &self.head.q
    }

    pub fn head_raw(&self) -> &[f64] {
        &self.head.raw
    }

    pub fn value(&self) -> Option<f64> {
        self.head.value
    }

    /// Action distribution for actor-critic heads.
    pub fn policy(&self) -> Option<&[f64]> {
        self.head.policy.as_deref()
    }

    pub fn greedy_action(&self) -> usize {
        argmax(&self.head.q)
    }

    /// Sign pattern of every ReLU pre-activation, for detecting kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.conv_pre
            .iter()
            .flatten()
            .chain(&self.fc_pre)
            .map(|&z| z > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    ConvPre(usize),
    FcPre,
    Q,
}

/// Executable network: spec plus a flat double-precision parameter vector in
/// canonical layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    spec: NetworkSpec,
    layout: Vec<TensorSlot>,
    geoms: Vec<ConvGeom>,
    params: Vec<f64>,
}

impl Net {
    pub fn new(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let layout = spec.tensor_layout()?;
        let total: usize = layout.iter().map(TensorSlot::len).sum();
        if params.len() != total {
            return Err(Error::shape("Net::new", format!("{total} parameters"), params.len().to_string()));
        }
        let mut geoms = Vec::new();
        let [mut c, mut h, mut w] = spec.input;
        for l in &spec.conv_layers {
            let g = ConvGeom { in_c: c, in_h: h, in_w: w, out_c: l.out_channels, kernel: l.kernel, stride: l.stride };
            (c, h, w) = (g.out_c, g.out_h(), g.out_w());
            geoms.push(g);
        }
        Ok(Net { spec, layout, geoms, params })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let n = spec.param_count()?;
        Net::new(spec, vec![0.0; n])
    }

    /// He-normal weights, zero biases.
    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Net::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in net.layout.clone() {
            if slot.name.ends_with(".w") {
                let fan_in: usize = slot.shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                for p in &mut net.params[slot.range()] {
                    *p = f64::from(normal.sample(&mut rng) as f32);
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[TensorSlot] {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.slot(name).map(|s| &self.params[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.slot(name)?.range();
        Some(&mut self.params[range])
    }

    /// Parameters rounded to single precision, one tensor per slot.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        self.layout
            .iter()
            .map(|s| (s.name.clone(), Tensor::from_f64(&s.shape, &self.params[s.range()])))
            .collect()
    }

    pub fn conv_shapes(&self) -> Vec<[usize; 3]> {
        self.geoms.iter().map(|g| [g.out_c, g.out_h(), g.out_w()]).collect()
    }

    fn conv_params(&self, i: usize) -> (&[f64], &[f64]) {
        let (w, b) = (&self.layout[2 * i], &self.layout[2 * i + 1]);
        (&self.params[w.range()], &self.params[b.range()])
    }

    fn fc_index(&self) -> usize {
        2 * self.geoms.len()
    }

    fn head_params(&self) -> Vec<&[f64]> {
        self.layout[self.fc_index() + 2..].iter().map(|s| &self.params[s.range()]).collect()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        let expected: usize = self.spec.input.iter().product();
        if len != expected {
            return Err(Error::shape("forward", format!("{:?} input", self.spec.input), format!("{len} values")));
        }
        Ok(())
    }

    /// Runs only the first `depth` conv layers; returns their pre-activations.
    pub fn conv_pre_activations(&self, input: &[f64], depth: usize) -> Result<Vec<Vec<f64>>> {
        self.check_input(input.len())?;
        let mut pres = Vec::with_capacity(depth);
        let mut x = input.to_vec();
        for (i, g) in self.geoms.iter().take(depth).enumerate() {
            let (w, b) = self.conv_params(i);
            let pre = conv_forward(g, &x, w, b);
            x = pre.clone();
            relu_in_place(&mut x);
            pres.push(pre);
        }
        Ok(pres)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        self.check_input(input.len())?;
        let mut conv_pre = Vec::with_capacity(self.geoms.len());
        let mut conv_post: Vec<Vec<f64>> = Vec::with_capacity(self.geoms.len());
        for (i, g) in self.geoms.iter().enumerate() {
            let (w, b) = self.conv_params(i);
            let x: &[f64] = if i == 0 { input } else { &conv_post[i - 1] };
            let pre = conv_forward(g, x, w, b);
            let mut post = pre.clone();
            relu_in_place(&mut post);
            conv_pre.push(pre);
            conv_post.push(post);
        }
        let features: &[f64] = conv_post.last().map_or(input, Vec::as_slice);
        let fc = self.fc_index();
        let fc_pre = dense_forward(features, &self.params[self.layout[fc].range()], &self.params[self.layout[fc + 1].range()]);
        let mut fc_post = fc_pre.clone();
        relu_in_place(&mut fc_post);
        let head = head::forward(self.spec.head, self.spec.c51, self.spec.n_actions, &fc_post, &self.head_params())?;
        Ok(Forward { input: input.to_vec(), conv_pre, conv_post, fc_pre, fc_post, head })
    }

    pub fn forward_f32(&self, input: &Tensor) -> Result<Forward> {
        self.forward(&input.to_f64())
    }

    pub fn trace(&self, input: &Tensor) -> Result<ActivationTrace> {
        let fwd = self.forward_f32(input)?;
        Ok(self.trace_from(&fwd))
    }

    pub fn trace_from(&self, fwd: &Forward) -> ActivationTrace {
        ActivationTrace {
            conv: self.conv_shapes().iter().zip(&fwd.conv_post).map(|(s, v)| Tensor::from_f64(s, v)).collect(),
            fc: Tensor::from_f64(&[fwd.fc_post.len()], &fwd.fc_post),
            head_raw: Tensor::from_f64(&[fwd.head.raw.len()], &fwd.head.raw),
            head_q: Tensor::from_f64(&[fwd.head.q.len()], &fwd.head.q),
            chosen_action: fwd.greedy_action(),
        }
    }

    pub fn check_objective(&self, objective: &Objective) -> Result<()> {
        let shapes = self.conv_shapes();
        let conv_shape = |layer: usize| {
            layer
                .checked_sub(1)
                .and_then(|i| shapes.get(i))
                .copied()
                .ok_or_else(|| Error::Objective(format!("conv layer {layer} does not exist")))
        };
        let ok = match *objective {
            Objective::ConvUnit { layer, channel, y, x } => {
                let [c, h, w] = conv_shape(layer)?;
                channel < c && y < h && x < w
            }
            Objective::ConvChannel { layer, channel } => channel < conv_shape(layer)?[0],
            Objective::FcUnit(i) => i < self.spec.fc_width,
            Objective::Output(a) => a < self.spec.n_actions,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Objective(format!("{objective:?} is outside the layer bounds")))
        }
    }

    pub fn objective_value(&self, fwd: &Forward, objective: &Objective) -> f64 {
        let shapes = self.conv_shapes();
        match *objective {
            Objective::ConvUnit { layer, channel, y, x } => {
                let [_, h, w] = shapes[layer - 1];
                fwd.conv_pre[layer - 1][(channel * h + y) * w + x]
            }
            Objective::ConvChannel { layer, channel } => {
                let [_, h, w] = shapes[layer - 1];
                let map = &fwd.conv_pre[layer - 1][channel * h * w..(channel + 1) * h * w];
                map.iter().sum::<f64>() / (h * w) as f64
            }
            Objective::FcUnit(i) => fwd.fc_pre[i],
            Objective::Output(a) => fwd.head.q[a],
        }
    }

    fn objective_seed(&self, objective: &Objective) -> (Node, Vec<f64>) {
        let shapes = self.conv_shapes();
        match *objective {
            Objective::ConvUnit { layer, channel, y, x } => {
                let [c, h, w] = shapes[layer - 1];
                let mut g = vec![0.0; c * h * w];
                g[(channel * h + y) * w + x] = 1.0;
                (Node::ConvPre(layer - 1), g)
            }
            Objective::ConvChannel { layer, channel } => {
                let [c, h, w] = shapes[layer - 1];
                let mut g = vec![0.0; c * h * w];
                let n = (h * w) as f64;
                g[channel * h * w..(channel + 1) * h * w].fill(1.0 / n);
                (Node::ConvPre(layer - 1), g)
            }
            Objective::FcUnit(i) => {
                let mut g = vec![0.0; self.spec.fc_width];
                g[i] = 1.0;
                (Node::FcPre, g)
            }
            Objective::Output(a) => {
                let mut g = vec![0.0; self.spec.n_actions];
                g[a] = 1.0;
                (Node::Q, g)
            }
        }
    }

    fn backward(&self, fwd: &Forward, node: Node, seed: Vec<f64>, want_input: bool, mut grads: Option<&mut [f64]>) -> Option<Vec<f64>> {
        let fc = self.fc_index();
        let mut grad = seed;
        let mut conv_start = self.geoms.len();
        if let Node::Q = node {
            let head_slots = &self.layout[fc + 2..];
            let pg = grads.as_deref_mut().map(|g| {
                let first = head_slots[0].offset;
                let last = head_slots.last().expect("head has tensors");
                let mut rest = &mut g[first..last.offset + last.len()];
                let mut out = Vec::with_capacity(head_slots.len());
                for s in head_slots {
                    let (a, b) = rest.split_at_mut(s.len());
                    out.push(a);
                    rest = b;
                }
                out
            });
            grad = head::backward(self.spec.head, self.spec.c51, &fwd.fc_post, &self.head_params(), &fwd.head, &grad, pg);
            relu_mask(&fwd.fc_pre, &mut grad);
        }
        if matches!(node, Node::Q | Node::FcPre) {
            let features: &[f64] = fwd.conv_post.last().map_or(&fwd.input, Vec::as_slice);
            let (w, b) = (&self.layout[fc], &self.layout[fc + 1]);
            let pg = grads.as_deref_mut().map(|g| g[w.offset..b.offset + b.len()].split_at_mut(w.len()));
            let need = want_input || !self.geoms.is_empty();
            grad = dense_backward(features, &self.params[w.range()], &grad, need, pg)?;
            if let Some(last) = fwd.conv_pre.last() {
                relu_mask(last, &mut grad);
            }
        } else if let Node::ConvPre(i) = node {
            conv_start = i + 1;
        }
        for i in (0..conv_start).rev() {
            let g = &self.geoms[i];
            let input: &[f64] = if i == 0 { &fwd.input } else { &fwd.conv_post[i - 1] };
            let (ws, bs) = (&self.layout[2 * i], &self.layout[2 * i + 1]);
            let pg = grads.as_deref_mut().map(|p| p[ws.offset..bs.offset + bs.len()].split_at_mut(ws.len()));
            let need = i > 0 || want_input;
            grad = conv_backward(g, input, &self.params[ws.range()], &grad, need, pg)?;
            if i > 0 {
                relu_mask(&fwd.conv_pre[i - 1], &mut grad);
            }
        }
        want_input.then_some(grad)
    }

    /// Gradient of the objective with respect to the input, in double precision.
    pub fn input_gradient_f64(&self, input: &[f64], objective: &Objective) -> Result<(f64, Vec<f64>)> {
        self.check_objective(objective)?;
        let fwd = self.forward(input)?;
        let value = self.objective_value(&fwd, objective);
        let (node, seed) = self.objective_seed(objective);
        let grad = self.backward(&fwd, node, seed, true, None).expect("input gradient requested");
        Ok((value, grad))
    }

    /// Gradient of the objective with respect to every parameter.
    pub fn objective_param_gradient(&self, input: &[f64], objective: &Objective) -> Result<Vec<f64>> {
        self.check_objective(objective)?;
        let fwd = self.forward(input)?;
        let (node, seed) = self.objective_seed(objective);
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&fwd, node, seed, false, Some(&mut grads));
        Ok(grads)
    }

    /// Mean softmax cross-entropy over `q` (treated as logits) and its gradient
    /// with respect to every parameter.
    pub fn cross_entropy_gradient(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for &(input, label) in batch {
            self.check_input(input.len())?;
            if label >= self.spec.n_actions {
                return Err(Error::LabelOutOfRange { label, classes: self.spec.n_actions });
            }
        }
        // Fixed chunking keeps the summation order independent of thread count.
        const CHUNK: usize = 8;
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for &(input, label) in chunk {
                    let fwd = self.forward(input).expect("validated input");
                    let (l, dq) = softmax_cross_entropy(&fwd.head.q, label);
                    loss += l;
                    self.backward(&fwd, Node::Q, dq, false, Some(&mut grads));
                }
                (loss, grads)
            })
            .collect();
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grads.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grads))
    }

    /// Mean cross-entropy without gradients.
    pub fn cross_entropy(&self, batch: &[(&[f64], usize)]) -> Result<f64> {
        let losses: Result<Vec<f64>> = batch
            .par_iter()
            .map(|&(input, label)| {
                let fwd = self.forward(input)?;
                Ok(softmax_cross_entropy(&fwd.head.q, label).0)
            })
            .collect();
        let losses = losses?;
        Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
    }

    pub fn is_actor_critic(&self) -> bool {
        self.spec.head == HeadKind::ActorCritic
    }
}

/// Returns `(-log softmax(logits)[label], softmax(logits) - onehot(label))`.
pub(crate) fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = crate::nn::kernels::softmax(logits);
    let loss = -p[label].max(1e-300).ln();
    p[label] -= 1.0;
    (loss, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{C51Params, ConvLayerSpec};

    fn small_spec(head: HeadKind) -> NetworkSpec {
        NetworkSpec {
            input: [2, 10, 10],
            conv_layers: vec![ConvLayerSpec::new(3, 4, 2), ConvLayerSpec::new(2, 3, 1)],
            fc_width: 5,
            head,
            n_actions: 3,
            c51: (head == HeadKind::C51).then(|| C51Params { n_atoms: 5, v_min: -2.0, v_max: 2.0 }),
        }
    }

    #[test]
    fn zero_weights_give_relu_of_bias() {
        let spec = small_spec(HeadKind::Q);
        let mut net = Net::zeros(spec).unwrap();
        net.tensor_mut("conv1.b").unwrap().copy_from_slice(&[0.5, -1.0, 2.0]);
        let fwd = net.forward(&vec![0.0; 200]).unwrap();
        let [_, h, w] = net.conv_shapes()[0];
        for (c, expect) in [0.5, 0.0, 2.0].into_iter().enumerate() {
            assert!(fwd.conv_post[0][c * h * w..(c + 1) * h * w].iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn zero_incoming_weights_give_zero_gradient() {
        let mut net = Net::random(small_spec(HeadKind::Q), 3).unwrap();
        let fc_in = net.slot("fc.w").unwrap().shape[1];
        net.tensor_mut("fc.w").unwrap()[2 * fc_in..3 * fc_in].fill(0.0);
        let input: Vec<f64> = (0..200).map(|i| (i % 7) as f64 / 7.0).collect();
        let (_, g) = net.input_gradient_f64(&input, &Objective::FcUnit(2)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_bounds_are_checked() {
        let net = Net::random(small_spec(HeadKind::Dueling), 1).unwrap();
        let x = vec![0.5; 200];
        assert!(net.input_gradient_f64(&x, &Objective::Output(3)).is_err());
        assert!(net.input_gradient_f64(&x, &Objective::ConvChannel { layer: 3, channel: 0 }).is_err());
        assert!(net.input_gradient_f64(&x, &Objective::ConvUnit { layer: 2, channel: 1, y: 1, x: 1 }).is_ok());
        assert!(net.input_gradient_f64(&x, &Objective::ConvUnit { layer: 0, channel: 0, y: 0, x: 0 }).is_err());
    }

    #[test]
    fn logistic_gradient_matches_closed_form() {
        // A net with no conv layers reduces to fc -> relu -> linear head.
        let spec = NetworkSpec {
            input: [1, 1, 3],
            conv_layers: vec![],
            fc_width: 3,
            head: HeadKind::Q,
            n_actions: 2,
            c51: None,
        };
        let mut net = Net::zeros(spec).unwrap();
        // identity fc so the head sees the (positive) input directly
        net.tensor_mut("fc.w").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        net.tensor_mut("head.w").unwrap().copy_from_slice(&[0.2, -0.1, 0.4, 0.3, 0.5, -0.6]);
        net.tensor_mut("head.b").unwrap().copy_from_slice(&[0.1, -0.2]);
        let x = [0.5, 1.5, 2.0];
        let (_, grads) = net.cross_entropy_gradient(&[(&x, 1)]).unwrap();
        let logits: [f64; 2] = [0.1 + 0.2 * 0.5 - 0.1 * 1.5 + 0.4 * 2.0, -0.2 + 0.3 * 0.5 + 0.5 * 1.5 - 0.6 * 2.0];
        let z = logits[0].exp() + logits[1].exp();
        let delta = [logits[0].exp() / z, logits[1].exp() / z - 1.0];
        let hw = net.slot("head.w").unwrap().range();
        for a in 0..2 {
            for j in 0..3 {
                assert!((grads[hw.start + a * 3 + j] - delta[a] * x[j]).abs() < 1e-12);
            }
        }
        let hb = net.slot("head.b").unwrap().range();
        assert!((grads[hb.start] - delta[0]).abs() < 1e-12);
        assert!(net.cross_entropy_gradient(&[(&x, 2)]).is_err());
    }
}
