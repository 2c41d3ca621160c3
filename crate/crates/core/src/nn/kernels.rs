//! Double-precision convolution and dense kernels shared by the forward and
//! backward passes. Convolutions are lowered to GEMM via im2col.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }
}

fn im2col(g: &ConvGeom, input: &[f64]) -> Vec<f64> {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let cols_n = oh * ow;
    let mut cols = vec![0.0; g.patch_len() * cols_n];
    for c in 0..g.in_c {
        for i in 0..k {
            for j in 0..k {
                let row = (c * k + i) * k + j;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for y in 0..oh {
                    let src = &input[(c * g.in_h + y * s + i) * g.in_w..];
                    for x in 0..ow {
                        dst[y * ow + x] = src[x * s + j];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(g: &ConvGeom, cols: &[f64], grad_input: &mut [f64]) {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let cols_n = oh * ow;
    for c in 0..g.in_c {
        for i in 0..k {
            for j in 0..k {
                let row = (c * k + i) * k + j;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for y in 0..oh {
                    let base = (c * g.in_h + y * s + i) * g.in_w + j;
                    for x in 0..ow {
                        grad_input[base + x * s] += src[y * ow + x];
                    }
                }
            }
        }
    }
}

/// `c[m×n] = a[m×k] · b[k×n] (+ c when accumulate)`, all row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices are sized exactly for the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let cols = im2col(g, input);
    let n = g.out_h() * g.out_w();
    let mut out = vec![0.0; g.out_len()];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    gemm(g.out_c, g.patch_len(), n, weights, false, &cols, false, &mut out, true);
    out
}

/// Returns the input gradient when `want_input`; accumulates weight and bias
/// gradients into `param_grads` when given.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    want_input: bool,
    param_grads: Option<(&mut [f64], &mut [f64])>,
) -> Option<Vec<f64>> {
    let n = g.out_h() * g.out_w();
    let p = g.patch_len();
    if let Some((gw, gb)) = param_grads {
        let cols = im2col(g, input);
        gemm(g.out_c, n, p, grad_out, false, &cols, true, gw, true);
        for (o, row) in grad_out.chunks_exact(n).enumerate() {
            gb[o] += row.iter().sum::<f64>();
        }
    }
    if !want_input {
        return None;
    }
    let mut cols_grad = vec![0.0; p * n];
    gemm(p, g.out_c, n, weights, true, grad_out, false, &mut cols_grad, false);
    let mut grad_input = vec![0.0; g.in_len()];
    col2im(g, &cols_grad, &mut grad_input);
    Some(grad_input)
}

pub(crate) fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    weights
        .chunks_exact(n)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

pub(crate) fn dense_backward(
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    want_input: bool,
    param_grads: Option<(&mut [f64], &mut [f64])>,
) -> Option<Vec<f64>> {
    let n = input.len();
    if let Some((gw, gb)) = param_grads {
        for (o, &go) in grad_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            for (w, x) in gw[o * n..(o + 1) * n].iter_mut().zip(input) {
                *w += go * x;
            }
        }
    }
    if !want_input {
        return None;
    }
    let mut grad_input = vec![0.0; n];
    for (row, &go) in weights.chunks_exact(n).zip(grad_out) {
        if go == 0.0 {
            continue;
        }
        for (gi, w) in grad_input.iter_mut().zip(row) {
            *gi += go * w;
        }
    }
    Some(grad_input)
}

pub(crate) fn relu_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose pre-activation was not positive.
pub(crate) fn relu_mask(pre: &[f64], grad: &mut [f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
        let mut out = vec![0.0; g.out_len()];
        for o in 0..g.out_c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b[o];
                    for c in 0..g.in_c {
                        for i in 0..k {
                            for j in 0..k {
                                acc += w[((o * g.in_c + c) * k + i) * k + j]
                                    * x[(c * g.in_h + y * g.stride + i) * g.in_w + xx * g.stride + j];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xx] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 17) as f64 - 8.0) * scale).collect()
    }

    #[test]
    fn gemm_conv_matches_loops() {
        let g = ConvGeom { in_c: 3, in_h: 9, in_w: 7, out_c: 4, kernel: 3, stride: 2 };
        let x = ramp(g.in_len(), 0.1);
        let w = ramp(g.out_c * g.patch_len(), 0.03);
        let b = vec![0.5, -0.25, 0.0, 1.0];
        let fast = conv_forward(&g, &x, &w, &b);
        let slow = naive_conv(&g, &x, &w, &b);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_input_gradient_is_adjoint_of_forward() {
        // <conv(x), g> - <b, sum g> == <x, conv_backward(g)>
        let g = ConvGeom { in_c: 2, in_h: 8, in_w: 8, out_c: 3, kernel: 4, stride: 2 };
        let x = ramp(g.in_len(), 0.2);
        let w = ramp(g.out_c * g.patch_len(), 0.05);
        let zero_b = vec![0.0; 3];
        let go = ramp(g.out_len(), 0.3);
        let y = conv_forward(&g, &x, &w, &zero_b);
        let lhs: f64 = y.iter().zip(&go).map(|(a, b)| a * b).sum();
        let gi = conv_backward(&g, &x, &w, &go, true, None).unwrap();
        let rhs: f64 = x.iter().zip(&gi).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
