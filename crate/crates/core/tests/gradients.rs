mod common;

use common::*;
use azoo_core::dreamer::composite_gradient;
use rand::Rng;

#[test]
fn hundred_random_cases_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let o = gradient_case(seed);
        assert!(o.checked > 0, "case {seed} checked nothing");
        assert!(o.max_rel < 1e-3, "case {seed}: relative error {}", o.max_rel);
        worst = worst.max(o.max_rel);
    }
    assert!(worst < 1e-3);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = rng(77);
    let spec = random_spec(&mut rng);
    let mut net = random_net(spec, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..5).map(|_| random_input(&net, &mut rng)).collect();
    let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..net.spec().n_actions)).collect();
    let batch: Vec<(&[f64], usize)> = inputs.iter().map(Vec::as_slice).zip(labels.iter().copied()).collect();
    let (_, grads) = net.cross_entropy_gradient(&batch).unwrap();
    let patterns = |net: &azoo_core::Net| inputs.iter().map(|x| net.forward(x).unwrap().relu_pattern()).collect::<Vec<_>>();
    let base = patterns(&net);
    let h = 1e-4;
    for i in 0..net.params().len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let (lp, pp) = (net.cross_entropy(&batch).unwrap(), patterns(&net));
        net.params_mut()[i] = orig - h;
        let (lm, pm) = (net.cross_entropy(&batch).unwrap(), patterns(&net));
        net.params_mut()[i] = orig;
        if pp != base || pm != base {
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        assert!(rel_err(grads[i], fd) < 1e-3, "param {i}: {} vs {fd}", grads[i]);
    }
}

#[test]
fn dream_objective_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = rng(1000 + seed);
        let spec = random_spec(&mut rng);
        let net = random_net(spec, &mut rng);
        let obj = random_objective(&net, &mut rng);
        let x = random_input(&net, &mut rng);
        let shift = (rng.random_range(-2i64..=2) as isize, rng.random_range(-2i64..=2) as isize);
        let (lt, l1) = (0.3, 0.2);
        let (_, grad) = composite_gradient(&net, &x, &obj, lt, l1, shift).unwrap();
        let f = |x: &[f64]| composite_gradient(&net, x, &obj, lt, l1, shift).unwrap().0;
        let h = 1e-6;
        let [_, hh, ww] = net.spec().input;
        let mut checked = 0;
        for i in 0..x.len() {
            // skip pixels within h of a neighbour, where |a - b| has a kink
            let (ch, y, xx) = (i / (hh * ww), (i / ww) % hh, i % ww);
            let near = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dy, dx)| {
                let (ny, nx) = (y as i64 + dy, xx as i64 + dx);
                ny >= 0 && nx >= 0 && (ny as usize) < hh && (nx as usize) < ww && (x[ch * hh * ww + ny as usize * ww + nx as usize] - x[i]).abs() < 10.0 * h
            });
            if near {
                continue;
            }
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(rel_err(grad[i], fd) < 1e-3, "seed {seed} coord {i}: {} vs {fd}", grad[i]);
            checked += 1;
        }
        assert!(checked > x.len() / 2);
    }
}
