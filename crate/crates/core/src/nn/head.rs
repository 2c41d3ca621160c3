use crate::error::{Error, Result};
use crate::nn::kernels::{dense_backward, dense_forward, softmax};
use crate::nn::spec::{C51Params, HeadKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HeadOut {
    pub raw: Vec<f64>,
    pub q: Vec<f64>,
    pub value: Option<f64>,
    pub policy: Option<Vec<f64>>,
    pub atom_probs: Option<Vec<f64>>,
}

/// Head parameters in layout order (w, b pairs).
pub(crate) fn forward(kind: HeadKind, c51: Option<C51Params>, n_actions: usize, x: &[f64], params: &[&[f64]]) -> Result<HeadOut> {
    Ok(match kind {
        HeadKind::Q => {
            let q = dense_forward(x, params[0], params[1]);
            HeadOut { raw: q.clone(), q, value: None, policy: None, atom_probs: None }
        }
        HeadKind::Dueling => {
            let v = dense_forward(x, params[0], params[1])[0];
            let adv = dense_forward(x, params[2], params[3]);
            let mean = adv.iter().sum::<f64>() / adv.len() as f64;
            let q = adv.iter().map(|a| v + a - mean).collect();
            let mut raw = Vec::with_capacity(n_actions + 1);
            raw.push(v);
            raw.extend_from_slice(&adv);
            HeadOut { raw, q, value: Some(v), policy: None, atom_probs: None }
        }
        HeadKind::C51 => {
            let c = c51.ok_or_else(|| Error::Config("C51 head requires c51 parameters".into()))?;
            let raw = dense_forward(x, params[0], params[1]);
            let z = c.support();
            let mut probs = Vec::with_capacity(raw.len());
            let q = raw
                .chunks_exact(c.n_atoms)
                .map(|logits| {
                    let p = softmax(logits);
                    let expect = p.iter().zip(&z).map(|(p, z)| p * z).sum();
                    probs.extend(p);
                    expect
                })
                .collect();
            HeadOut { raw, q, value: None, policy: None, atom_probs: Some(probs) }
        }
        HeadKind::ActorCritic => {
            let logits = dense_forward(x, params[0], params[1]);
            let v = dense_forward(x, params[2], params[3])[0];
            let mut raw = logits.clone();
            raw.push(v);
            let policy = softmax(&logits);
            HeadOut { raw, q: logits, value: Some(v), policy: Some(policy), atom_probs: None }
        }
    })
}

/// Backpropagates `dq` through the head. Returns the gradient with respect to
/// the head input; head parameter gradients accumulate into `param_grads`
/// (laid out like `params`).
pub(crate) fn backward(
    kind: HeadKind,
    c51: Option<C51Params>,
    x: &[f64],
    params: &[&[f64]],
    out: &HeadOut,
    dq: &[f64],
    mut param_grads: Option<Vec<&mut [f64]>>,
) -> Vec<f64> {
    let mut grad_x = vec![0.0; x.len()];
    let mut linear = |idx: usize, d: &[f64], grads: &mut Option<Vec<&mut [f64]>>| {
        let pg = grads.as_mut().map(|g| {
            let (a, b) = g.split_at_mut(idx + 1);
            (&mut *a[idx], &mut *b[0])
        });
        let gi = dense_backward(x, params[idx], d, true, pg).expect("input grad requested");
        for (acc, g) in grad_x.iter_mut().zip(gi) {
            *acc += g;
        }
    };
    match kind {
        HeadKind::Q | HeadKind::ActorCritic => linear(0, dq, &mut param_grads),
        HeadKind::Dueling => {
            let dv = [dq.iter().sum::<f64>()];
            let mean = dq.iter().sum::<f64>() / dq.len() as f64;
            let da: Vec<f64> = dq.iter().map(|d| d - mean).collect();
            linear(0, &dv, &mut param_grads);
            linear(2, &da, &mut param_grads);
        }
        HeadKind::C51 => {
            let c = c51.expect("validated spec");
            let z = c.support();
            let probs = out.atom_probs.as_ref().expect("C51 forward stores atom probabilities");
            let mut draw = vec![0.0; probs.len()];
            for (a, &d) in dq.iter().enumerate() {
                let qa = out.q[a];
                for i in 0..c.n_atoms {
                    let k = a * c.n_atoms + i;
                    draw[k] = d * probs[k] * (z[i] - qa);
                }
            }
            linear(0, &draw, &mut param_grads);
        }
    }
    grad_x
}

/// Output of a head evaluated on a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// Raw linear outputs: Q values, `[V, A..]` for dueling, atom logits for
    /// C51, `[logits.., V]` for actor-critic.
    pub raw: Tensor,
    /// Per-action values (policy logits for actor-critic).
    pub q: Tensor,
    pub value: Option<f32>,
    /// Action distribution (actor-critic only).
    pub policy: Option<Tensor>,
}

/// Evaluates a head on `features`. `params` holds the head tensors in layout
/// order, e.g. `[head.w, head.b]` or `[head.value.w, head.value.b,
/// head.advantage.w, head.advantage.b]`.
pub fn head_forward(features: &Tensor, head: HeadKind, c51: Option<C51Params>, params: &[&Tensor]) -> Result<HeadOutput> {
    let expected = if matches!(head, HeadKind::Q | HeadKind::C51) { 2 } else { 4 };
    if params.len() != expected {
        return Err(Error::shape("head_forward", format!("{expected} tensors"), params.len().to_string()));
    }
    if head == HeadKind::C51 && c51.is_none() {
        return Err(Error::Config("C51 head requires c51 parameters".into()));
    }
    let x = features.to_f64();
    for pair in params.chunks_exact(2) {
        let (w, b) = (pair[0], pair[1]);
        if w.shape().len() != 2 || w.shape()[1] != x.len() || b.len() != w.shape()[0] {
            return Err(Error::shape(
                "head_forward",
                format!("[m, {}] weights with [m] bias", x.len()),
                format!("{:?} / {:?}", w.shape(), b.shape()),
            ));
        }
    }
    let owned: Vec<Vec<f64>> = params.iter().map(|t| t.to_f64()).collect();
    let refs: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
    let n_actions = match head {
        HeadKind::C51 => params[0].shape()[0] / c51.map_or(1, |c| c.n_atoms),
        HeadKind::Dueling => params[2].shape()[0],
        _ => params[0].shape()[0],
    };
    let out = forward(head, c51, n_actions, &x, &refs)?;
    Ok(HeadOutput {
        raw: Tensor::from_f64(&[out.raw.len()], &out.raw),
        q: Tensor::from_f64(&[out.q.len()], &out.q),
        value: out.value.map(|v| v as f32),
        policy: out.policy.map(|p| Tensor::from_f64(&[p.len()], &p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f32>) -> Tensor {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn dueling_with_equal_advantages_gives_value() {
        let x = t(&[2], vec![1.0, -2.0]);
        let vw = t(&[1, 2], vec![0.5, 0.25]);
        let vb = t(&[1], vec![0.75]);
        let aw = t(&[3, 2], vec![0.0; 6]);
        let ab = t(&[3], vec![1.5; 3]);
        let out = head_forward(&x, HeadKind::Dueling, None, &[&vw, &vb, &aw, &ab]).unwrap();
        let v = 0.5 - 0.5 + 0.75;
        assert_eq!(out.q.data(), &[v, v, v]);
        assert_eq!(out.value, Some(v));
    }

    #[test]
    fn c51_uniform_atoms_give_support_midpoint() {
        let c = C51Params::new(-3.0, 7.0);
        let x = t(&[2], vec![0.3, 0.4]);
        let w = Tensor::zeros(&[2 * 51, 2]);
        let b = Tensor::zeros(&[2 * 51]);
        let out = head_forward(&x, HeadKind::C51, Some(c), &[&w, &b]).unwrap();
        for &q in out.q.data() {
            assert!((q - 2.0).abs() < 1e-5);
        }
        assert!(head_forward(&x, HeadKind::C51, None, &[&w, &b]).is_err());
    }

    #[test]
    fn actor_critic_zero_logits_is_uniform() {
        let x = t(&[1], vec![1.0]);
        let pw = Tensor::zeros(&[2, 1]);
        let pb = Tensor::zeros(&[2]);
        let vw = t(&[1, 1], vec![2.0]);
        let vb = t(&[1], vec![0.5]);
        let out = head_forward(&x, HeadKind::ActorCritic, None, &[&pw, &pb, &vw, &vb]).unwrap();
        assert_eq!(out.policy.unwrap().data(), &[0.5, 0.5]);
        assert_eq!(out.value, Some(2.5));
        assert_eq!(out.raw.data(), &[0.0, 0.0, 2.5]);
    }
}
