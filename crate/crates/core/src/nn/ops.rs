//! Affine op kernels: forward, input-transpose and parameter gradients.

use crate::nn::{Conv2d, Dense, Shape};

pub(crate) fn dense_forward(d: &Dense, input: &[f64]) -> Vec<f64> {
    d.weights
        .chunks_exact(d.inputs)
        .zip(&d.bias)
        .map(|(row, b)| row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x))
        .collect()
}

pub(crate) fn dense_backward(d: &Dense, grad_out: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; d.inputs];
    for (row, &go) in d.weights.chunks_exact(d.inputs).zip(grad_out) {
        if go == 0.0 {
            continue;
        }
        for (gi, w) in g.iter_mut().zip(row) {
            *gi += w * go;
        }
    }
    g
}

pub(crate) fn dense_param_grad(d: &Dense, input: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    for ((row, gbo), &go) in gw.chunks_exact_mut(d.inputs).zip(gb.iter_mut()).zip(grad_out) {
        *gbo += go;
        if go == 0.0 {
            continue;
        }
        for (g, x) in row.iter_mut().zip(input) {
            *g += go * x;
        }
    }
}

/// Visits every (output index, weight index, input index) triple of a convolution.
#[inline]
fn conv_for_each(c: &Conv2d, input: Shape, out: Shape, mut f: impl FnMut(usize, usize, usize)) {
    let (kh, kw, s, p) = (c.kernel_h, c.kernel_w, c.stride, c.padding as isize);
    for o in 0..c.out_channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let oi = out.index(o, oy, ox);
                for ci in 0..c.in_channels {
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= input.height as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= input.width as isize {
                                continue;
                            }
                            let wi = ((o * c.in_channels + ci) * kh + ky) * kw + kx;
                            f(oi, wi, input.index(ci, iy as usize, ix as usize));
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward(c: &Conv2d, input_shape: Shape, out_shape: Shape, input: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; out_shape.len()];
    let plane = out_shape.pixels();
    for (o, b) in c.bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(*b);
    }
    conv_for_each(c, input_shape, out_shape, |oi, wi, ii| out[oi] += c.weights[wi] * input[ii]);
    out
}

pub(crate) fn conv_backward(c: &Conv2d, input_shape: Shape, out_shape: Shape, grad_out: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; input_shape.len()];
    conv_for_each(c, input_shape, out_shape, |oi, wi, ii| g[ii] += c.weights[wi] * grad_out[oi]);
    g
}

pub(crate) fn conv_param_grad(
    c: &Conv2d,
    input_shape: Shape,
    out_shape: Shape,
    input: &[f64],
    grad_out: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let plane = out_shape.pixels();
    for (o, gbo) in gb.iter_mut().enumerate() {
        *gbo += grad_out[o * plane..(o + 1) * plane].iter().sum::<f64>();
    }
    conv_for_each(c, input_shape, out_shape, |oi, wi, ii| gw[wi] += grad_out[oi] * input[ii]);
}

pub(crate) fn avgpool_forward(window: usize, input_shape: Shape, out_shape: Shape, input: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (window * window) as f64;
    let mut out = vec![0.0; out_shape.len()];
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut acc = 0.0;
                for dy in 0..window {
                    for dx in 0..window {
                        acc += input[input_shape.index(c, oy * window + dy, ox * window + dx)];
                    }
                }
                out[out_shape.index(c, oy, ox)] = acc * scale;
            }
        }
    }
    out
}

pub(crate) fn avgpool_backward(window: usize, input_shape: Shape, out_shape: Shape, grad_out: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (window * window) as f64;
    let mut g = vec![0.0; input_shape.len()];
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let go = grad_out[out_shape.index(c, oy, ox)] * scale;
                for dy in 0..window {
                    for dx in 0..window {
                        g[input_shape.index(c, oy * window + dy, ox * window + dx)] += go;
                    }
                }
            }
        }
    }
    g
}
