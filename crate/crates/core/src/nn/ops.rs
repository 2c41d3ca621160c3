//! Single-layer operations on [`Tensor`]s. Reductions accumulate in double
//! precision.

use crate::error::{Error, Result};
use crate::nn::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Valid (unpadded) 2-D convolution of a `C×H×W` input with `O×C×K×K` weights.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (&[c, h, w], &[o, wc, k, k2]) = (input.shape(), weights.shape()) else {
        return Err(Error::shape(
            "conv2d_forward",
            "C×H×W input and O×C×K×K weights",
            format!("{:?} / {:?}", input.shape(), weights.shape()),
        ));
    };
    if wc != c || k != k2 {
        return Err(Error::shape("conv2d_forward", format!("weights [_, {c}, k, k]"), format!("{:?}", weights.shape())));
    }
    if bias.shape() != [o] {
        return Err(Error::shape("conv2d_forward", format!("bias [{o}]"), format!("{:?}", bias.shape())));
    }
    if stride == 0 || h < k || w < k {
        return Err(Error::shape("conv2d_forward", format!("stride >= 1 and input >= {k}x{k}"), format!("{h}x{w}, stride {stride}")));
    }
    let g = ConvGeom { in_c: c, in_h: h, in_w: w, out_c: o, kernel: k, stride };
    let out = kernels::conv_forward(&g, &input.to_f64(), &weights.to_f64(), &bias.to_f64());
    Ok(Tensor::from_f64(&[o, g.out_h(), g.out_w()], &out))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `y = W x + b` for `W: M×N`.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.len();
    match weights.shape() {
        &[m, wn] if wn == n && bias.shape() == [m] => {
            let y = kernels::dense_forward(&input.to_f64(), &weights.to_f64(), &bias.to_f64());
            Ok(Tensor::from_f64(&[m], &y))
        }
        s => Err(Error::shape("fc_forward", format!("[M, {n}] weights with [M] bias"), format!("{s:?} / {:?}", bias.shape()))),
    }
}
