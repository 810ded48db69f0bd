//! Plain-loop convolution kernels used by the forward passes.
//!
//! Loops run in a fixed order so every forward pass is bitwise reproducible.

use ndarray::{Array2, Array3, ArrayView2};

/// `u[c, t] = Σ_k w[c, k] x[tH + k] + b[c]` for `t < ⌊(N - K)/H⌋ + 1`.
pub fn strided_conv(x: &[f64], weights: &Array2<f64>, bias: &[f64], hop: usize) -> Array2<f64> {
    let (channels, kernel) = weights.dim();
    let frames = (x.len() - kernel) / hop + 1;
    let mut out = Array2::zeros((channels, frames));
    for c in 0..channels {
        let w = weights.row(c);
        let w = w.as_slice().expect("contiguous weights");
        let mut row = out.row_mut(c);
        for (t, o) in row.iter_mut().enumerate() {
            let seg = &x[t * hop..t * hop + kernel];
            let mut acc = 0.0;
            for (a, b) in w.iter().zip(seg) {
                acc += a * b;
            }
            *o = acc + bias[c];
        }
    }
    out
}

/// Overlap-add synthesis: `y[tH + k] += Σ_c v[c, t] g[c, k]`, plus a
/// constant `bias`. Output length is `(T - 1)H + K`.
pub fn transposed_conv(v: ArrayView2<'_, f64>, weights: &Array2<f64>, bias: f64, hop: usize) -> Vec<f64> {
    let (channels, kernel) = weights.dim();
    let frames = v.ncols();
    let mut y = vec![bias; (frames - 1) * hop + kernel];
    for t in 0..frames {
        let dst = &mut y[t * hop..t * hop + kernel];
        for c in 0..channels {
            let a = v[[c, t]];
            if a == 0.0 {
                continue;
            }
            let g = weights.row(c);
            for (d, w) in dst.iter_mut().zip(g.iter()) {
                *d += a * w;
            }
        }
    }
    y
}

/// Same-length dilated convolution with zero padding.
/// `w` has shape `(out, in, taps)` with an odd tap count.
pub fn dilated_conv(x: ArrayView2<'_, f64>, w: &Array3<f64>, b: &[f64], dilation: usize) -> Array2<f64> {
    let (outs, ins, taps) = w.dim();
    let frames = x.ncols() as isize;
    let centre = (taps / 2) as isize;
    let mut y = Array2::zeros((outs, x.ncols()));
    for o in 0..outs {
        let mut yrow = y.row_mut(o);
        let yrow = yrow.as_slice_mut().expect("contiguous output");
        yrow.fill(b[o]);
        for i in 0..ins {
            let xrow = x.row(i);
            for j in 0..taps {
                let wv = w[[o, i, j]];
                if wv == 0.0 {
                    continue;
                }
                let shift = (j as isize - centre) * dilation as isize;
                let lo = (-shift).max(0);
                let hi = (frames - shift).min(frames);
                for t in lo..hi {
                    yrow[t as usize] += wv * xrow[(t + shift) as usize];
                }
            }
        }
    }
    y
}

/// `y = W x + b` applied framewise (1×1 convolution).
pub fn pointwise(x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &[f64]) -> Array2<f64> {
    let mut y = w.dot(&x);
    for (mut row, bias) in y.rows_mut().into_iter().zip(b) {
        row.mapv_inplace(|v| v + bias);
    }
    y
}

pub const GLN_EPS: f64 = 1e-12;

/// Global layer normalization over (channel, frame) with per-channel affine.
pub fn global_layer_norm(x: &mut Array2<f64>, gain: &[f64], bias: &[f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { 1.0 / (var + GLN_EPS).sqrt() } else { 0.0 };
    for (mut row, (g, b)) in x.rows_mut().into_iter().zip(gain.iter().zip(bias)) {
        row.mapv_inplace(|v| g * (v - mean) * scale + b);
    }
}

pub fn prelu(x: &mut Array2<f64>, slope: f64) {
    x.mapv_inplace(|v| if v >= 0.0 { v } else { slope * v });
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}
