//! Hand-wired networks with known behaviour, used as fixtures and demos.

use crate::env::{OBS_SIZE, STACK_DEPTH};
use crate::error::Result;
use crate::model::{Algorithm, FrozenModel, ModelMeta};
use crate::nn::{HeadKind, Net, NetworkSpec};

fn fill_box(net: &mut Net, name: &str, out: usize, in_c: usize, value: f64) {
    let k = net.slot(name).expect("conv slot").shape[2];
    let in_total = net.slot(name).expect("conv slot").shape[1];
    let w = net.tensor_mut(name).expect("conv tensor");
    let base = (out * in_total + in_c) * k * k;
    w[base..base + k * k].iter_mut().for_each(|v| *v = value);
}

/// Default-architecture Q network whose action `a` scores the mean
/// brightness of quadrant `a` of the present frame (row-major: top-left,
/// top-right, bottom-left, bottom-right). Box filters make the four
/// quadrants mirror images of each other, so under i.i.d. input noise every
/// action is equally likely to win.
pub fn quadrant_reader() -> Result<FrozenModel> {
    let spec = NetworkSpec::nature(HeadKind::Q, 4);
    let mut net = Net::zeros(spec.clone())?;
    fill_box(&mut net, "conv1.w", 0, STACK_DEPTH - 1, 1.0 / 64.0);
    fill_box(&mut net, "conv2.w", 0, 0, 1.0 / 16.0);
    fill_box(&mut net, "conv3.w", 0, 0, 1.0 / 9.0);
    let (h, w) = *spec.conv_output_sizes()?.last().expect("conv layers");
    let flat = spec.flat_features()?;
    let half_h = h / 2;
    let half_w = w / 2;
    let fc = net.tensor_mut("fc.w").expect("fc");
    for y in 0..h {
        for x in 0..w {
            if y == half_h && h % 2 == 1 || x == half_w && w % 2 == 1 {
                continue;
            }
            let q = usize::from(y > half_h || (h % 2 == 0 && y >= half_h)) * 2
                + usize::from(x > half_w || (w % 2 == 0 && x >= half_w));
            fc[q * flat + y * w + x] = 1.0;
        }
    }
    let head = net.tensor_mut("head.w").expect("head");
    let width = spec.fc_width;
    for a in 0..4 {
        head[a * width + a] = 1.0;
    }
    Ok(FrozenModel::from_net(&net, ModelMeta::new("toy-catch", Algorithm::Other("quadrant".into()), "fixture")))
}

/// Network whose conv1 channel 0 correlates the present frame with an 8×8
/// template; all other parameters are zero.
pub fn template_detector(template: &[f32; 64], n_actions: usize) -> Result<FrozenModel> {
    let mut net = Net::zeros(NetworkSpec::nature(HeadKind::Q, n_actions))?;
    let base = (STACK_DEPTH - 1) * 64;
    let w = net.tensor_mut("conv1.w").expect("conv1");
    for (dst, &src) in w[base..base + 64].iter_mut().zip(template) {
        *dst = f64::from(src);
    }
    Ok(FrozenModel::from_net(&net, ModelMeta::new("synthetic", Algorithm::Other("template".into()), "fixture")))
}

/// Present-channel observation with a bright `size`×`size` square at the
/// given top-left corner.
pub fn square_observation(y0: usize, x0: usize, size: usize) -> crate::Tensor {
    let area = OBS_SIZE * OBS_SIZE;
    crate::Tensor::from_fn(&[STACK_DEPTH, OBS_SIZE, OBS_SIZE], |i| {
        let (c, y, x) = (i / area, (i % area) / OBS_SIZE, i % OBS_SIZE);
        let inside = (y0..y0 + size).contains(&y) && (x0..x0 + size).contains(&x);
        if c == STACK_DEPTH - 1 && inside {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_reader_picks_the_bright_quadrant() {
        let net = quadrant_reader().unwrap().to_net().unwrap();
        for (a, (y, x)) in [(0, 0), (0, 60), (60, 0), (60, 60)].into_iter().enumerate() {
            let fwd = net.forward_f32(&square_observation(y, x, 20)).unwrap();
            assert_eq!(fwd.greedy_action(), a);
        }
    }

    #[test]
    fn template_detector_fires_on_its_template() {
        let mut t = [0.0f32; 64];
        t[..8].iter_mut().for_each(|v| *v = 1.0);
        let net = template_detector(&t, 2).unwrap().to_net().unwrap();
        let fwd = net.forward_f32(&square_observation(8, 8, 8)).unwrap();
        assert_eq!(fwd.conv_post[0][2 * 20 + 2], 8.0);
    }
}
