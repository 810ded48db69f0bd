//! Windowed-sinc resampling as a one-parameter group action.
//!
//! A signal sampled at `F_s` is resampled to `exp(r)·F_s` through the linear
//! map `S(r)` whose entries are
//!
//! ```text
//! S[m, n] = k((m / exp(r) - n) / F_s, F_s),    k(t, F_s) = z(t) · sinc(F_s t)
//! ```
//!
//! with `z` a Hann window of total support `L` samples. The derivative of
//! `S(r)` at `r = 0` (row count pinned to the input length) is exposed as
//! [`build_derivative_matrix`] and its sparse counterpart
//! [`apply_derivative`].
//!
//! All kernel arithmetic is carried out in sample units (`u = F_s t`), so
//! the matrices themselves do not depend on the nominal rate.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Support width used throughout unless configured otherwise.
pub const DEFAULT_SUPPORT: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("sample rate must be finite and positive, got {0}")]
    InvalidRate(f64),
    #[error("signal contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("window support must be even and at least 2, got {0}")]
    InvalidSupport(usize),
    #[error("rate-change parameter must be finite, got {0}")]
    NonFiniteParameter(f64),
    #[error("input length must be at least 1")]
    EmptyInput,
    #[error("length mismatch: action expects {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// A sampled waveform with its sampling frequency in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self, ResampleError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(ResampleError::InvalidRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(ResampleError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self, ResampleError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

/// Window family and its total support `L` in samples at the source rate.
///
/// The window vanishes for `|t| > L / (2 F_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub support: usize,
}

impl WindowSpec {
    pub fn hann(support: usize) -> Result<Self, ResampleError> {
        let spec = Self {
            kind: WindowKind::Hann,
            support,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ResampleError> {
        if self.support < 2 || self.support % 2 != 0 {
            return Err(ResampleError::InvalidSupport(self.support));
        }
        Ok(())
    }

    fn half(&self) -> f64 {
        self.support as f64 / 2.0
    }

    /// Window value at `u` samples from the centre.
    pub fn value_at(&self, u: f64) -> f64 {
        match self.kind {
            WindowKind::Hann => {
                if u.abs() <= self.half() {
                    0.5 + 0.5 * (2.0 * PI * u / self.support as f64).cos()
                } else {
                    0.0
                }
            }
        }
    }

    /// d/du of [`WindowSpec::value_at`].
    pub fn slope_at(&self, u: f64) -> f64 {
        match self.kind {
            WindowKind::Hann => {
                if u.abs() <= self.half() {
                    let w = 2.0 * PI / self.support as f64;
                    -0.5 * w * (w * u).sin()
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            kind: WindowKind::Hann,
            support: DEFAULT_SUPPORT,
        }
    }
}

/// Normalized sinc, exactly zero at nonzero integers and one at the origin.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    let nearest = u.round();
    let frac = u - nearest;
    if frac == 0.0 {
        return 0.0;
    }
    // sin(pi u) = (-1)^k sin(pi frac), accurate for large |u|
    let sign = if (nearest as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * (PI * frac).sin() / (PI * u)
}

/// d/du sinc(u).
pub fn sinc_derivative(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let p2 = PI * PI;
        let u2 = u * u;
        return u * (-p2 / 3.0 + u2 * (p2 * p2 / 30.0 - u2 * p2 * p2 * p2 / 840.0));
    }
    ((PI * u).cos() - sinc(u)) / u
}

pub fn window_eval(t: f64, window: &WindowSpec, sample_rate: f64) -> f64 {
    window.value_at(sample_rate * t)
}

/// Windowed sinc `k(t, F_s) = z(t) sinc(F_s t)`.
pub fn kernel_eval(t: f64, window: &WindowSpec, sample_rate: f64) -> f64 {
    kernel_samples(sample_rate * t, window)
}

/// dk/dt of [`kernel_eval`].
pub fn kernel_derivative(t: f64, window: &WindowSpec, sample_rate: f64) -> f64 {
    sample_rate * kernel_slope_samples(sample_rate * t, window)
}

pub(crate) fn kernel_samples(u: f64, window: &WindowSpec) -> f64 {
    let z = window.value_at(u);
    if z == 0.0 {
        0.0
    } else {
        z * sinc(u)
    }
}

pub(crate) fn kernel_slope_samples(u: f64, window: &WindowSpec) -> f64 {
    if u.abs() > window.half() {
        return 0.0;
    }
    window.slope_at(u) * sinc(u) + window.value_at(u) * sinc_derivative(u)
}

/// `ceil(exp(r)·n)`, snapping products that land within rounding of an
/// integer (so `r = ln 2` doubles the length exactly).
pub fn output_length(r: f64, in_length: usize) -> usize {
    let v = r.exp() * in_length as f64;
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        v.ceil() as usize
    }
}

/// Realization of the group element with parameter `r` for a given input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleAction {
    r: f64,
    source_rate: f64,
    window: WindowSpec,
    in_length: usize,
    out_length: usize,
}

impl ResampleAction {
    pub fn new(
        r: f64,
        source_rate: f64,
        window: WindowSpec,
        in_length: usize,
    ) -> Result<Self, ResampleError> {
        let out_length = if r.is_finite() {
            output_length(r, in_length)
        } else {
            0
        };
        Self::with_out_length(r, source_rate, window, in_length, out_length)
    }

    /// Same entries as [`ResampleAction::new`] but with the row count fixed by
    /// the caller. Used to pin the output length to the input length.
    pub fn with_out_length(
        r: f64,
        source_rate: f64,
        window: WindowSpec,
        in_length: usize,
        out_length: usize,
    ) -> Result<Self, ResampleError> {
        if !r.is_finite() {
            return Err(ResampleError::NonFiniteParameter(r));
        }
        if !(source_rate.is_finite() && source_rate > 0.0) {
            return Err(ResampleError::InvalidRate(source_rate));
        }
        window.validate()?;
        if in_length == 0 {
            return Err(ResampleError::EmptyInput);
        }
        Ok(Self {
            r,
            source_rate,
            window,
            in_length,
            out_length,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn source_rate(&self) -> f64 {
        self.source_rate
    }
    pub fn target_rate(&self) -> f64 {
        self.r.exp() * self.source_rate
    }
    pub fn window(&self) -> WindowSpec {
        self.window
    }
    pub fn in_length(&self) -> usize {
        self.in_length
    }
    pub fn out_length(&self) -> usize {
        self.out_length
    }

    /// Matrix entry `(m, n)`. Shared by the dense and sparse paths so both
    /// see bit-identical coefficients.
    #[inline]
    fn entry(&self, growth: f64, m: usize, n: usize) -> f64 {
        let u = m as f64 / growth - n as f64;
        kernel_samples(u, &self.window)
    }

    pub fn sparse(&self) -> SparseResampler {
        SparseResampler::from_action(self)
    }
}

/// Row-compressed form of `S(r)`: each row holds at most `L + 1` nonzeros
/// inside a contiguous column band.
#[derive(Debug, Clone)]
pub struct SparseResampler {
    in_length: usize,
    out_length: usize,
    stride: usize,
    starts: Vec<usize>,
    counts: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseResampler {
    fn from_action(action: &ResampleAction) -> Self {
        let growth = action.r.exp();
        let half = action.window.half();
        let stride = action.window.support + 4;
        let n_in = action.in_length;
        let mut starts = Vec::with_capacity(action.out_length);
        let mut counts = Vec::with_capacity(action.out_length);
        let mut weights = vec![0.0; stride * action.out_length];
        for m in 0..action.out_length {
            let centre = m as f64 / growth;
            let lo = (centre - half).floor() - 1.0;
            let hi = (centre + half).ceil() + 1.0;
            let lo = lo.max(0.0) as usize;
            let hi = if hi < 0.0 {
                0
            } else {
                (hi as usize).min(n_in.saturating_sub(1))
            };
            if lo > hi || lo >= n_in {
                starts.push(0);
                counts.push(0);
                continue;
            }
            let count = hi - lo + 1;
            debug_assert!(count <= stride);
            let row = &mut weights[m * stride..m * stride + count];
            for (j, w) in row.iter_mut().enumerate() {
                *w = action.entry(growth, m, lo + j);
            }
            starts.push(lo);
            counts.push(count);
        }
        Self {
            in_length: n_in,
            out_length: action.out_length,
            stride,
            starts,
            counts,
            weights,
        }
    }

    pub fn in_length(&self) -> usize {
        self.in_length
    }
    pub fn out_length(&self) -> usize {
        self.out_length
    }

    /// Dot products in ascending column order; columns outside `[0, N)` are
    /// zero.
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.in_length);
        assert_eq!(out.len(), self.out_length);
        for (m, o) in out.iter_mut().enumerate() {
            let start = self.starts[m];
            let count = self.counts[m];
            let row = &self.weights[m * self.stride..m * self.stride + count];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(&x[start..start + count]) {
                acc += w * v;
            }
            *o = acc;
        }
    }

    /// Number of structurally nonzero coefficients in row `m`.
    pub fn row_nonzeros(&self, m: usize) -> usize {
        let row = &self.weights[m * self.stride..m * self.stride + self.counts[m]];
        row.iter().filter(|w| **w != 0.0).count()
    }
}

/// Dense `S(r)` with shape `out_length × in_length`.
pub fn build_matrix(action: &ResampleAction) -> Array2<f64> {
    let growth = action.r.exp();
    Array2::from_shape_fn((action.out_length, action.in_length), |(m, n)| {
        action.entry(growth, m, n)
    })
}

/// Dense `D = dS/dr` at `r = 0` with the row count pinned to `in_length`:
/// `D[m, n] = -(m / F_s) k'((m - n) / F_s)`.
pub fn build_derivative_matrix(
    in_length: usize,
    sample_rate: f64,
    window: &WindowSpec,
) -> Array2<f64> {
    Array2::from_shape_fn((in_length, in_length), |(m, n)| {
        let t = (m as f64 - n as f64) / sample_rate;
        -(m as f64 / sample_rate) * kernel_derivative(t, window, sample_rate)
    })
}

/// Resample a signal by `action` using sparse row dot products.
pub fn apply(action: &ResampleAction, x: &Signal) -> Result<Signal, ResampleError> {
    if x.len() != action.in_length {
        return Err(ResampleError::LengthMismatch {
            expected: action.in_length,
            actual: x.len(),
        });
    }
    let mut out = vec![0.0; action.out_length];
    action.sparse().apply_slice(x.samples(), &mut out);
    Signal::new(out, action.target_rate())
}

/// Convenience wrapper: resample `x` to `target_rate`.
pub fn resample_to(
    x: &Signal,
    target_rate: f64,
    window: WindowSpec,
) -> Result<Signal, ResampleError> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(ResampleError::InvalidRate(target_rate));
    }
    let r = (target_rate / x.sample_rate()).ln();
    let action = ResampleAction::new(r, x.sample_rate(), window, x.len())?;
    let mut out = apply(&action, x)?;
    // keep the nominal rate exact rather than exp(ln(a/b))·b
    out.sample_rate = target_rate;
    Ok(out)
}

/// Precomputed stencil of `D`: row `m` of `D x` is `-m Σ_d κ'(d) x[m - d]`.
#[derive(Debug, Clone)]
pub struct DerivativeStencil {
    half: usize,
    taps: Vec<f64>,
}

impl DerivativeStencil {
    pub fn new(window: &WindowSpec) -> Self {
        let half = window.support / 2;
        let taps = (0..=2 * half)
            .map(|j| kernel_slope_samples(j as f64 - half as f64, window))
            .collect();
        Self { half, taps }
    }

    /// `out = D x` (sample units, rate-independent).
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), out.len());
        let n = x.len() as isize;
        let half = self.half as isize;
        for (m, o) in out.iter_mut().enumerate() {
            let mi = m as isize;
            let lo = (mi - half).max(0);
            let hi = (mi + half).min(n - 1);
            let mut acc = 0.0;
            for col in lo..=hi {
                // offset d = m - col in [-half, half]
                let d = mi - col;
                acc += self.taps[(d + half) as usize] * x[col as usize];
            }
            *o = -(m as f64) * acc;
        }
    }
}

/// `D x` for a signal (output has the same length and rate).
pub fn apply_derivative(x: &Signal, window: &WindowSpec) -> Signal {
    let mut out = vec![0.0; x.len()];
    DerivativeStencil::new(window).apply_slice(x.samples(), &mut out);
    Signal {
        samples: out,
        sample_rate: x.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hann24() -> WindowSpec {
        WindowSpec::hann(24).unwrap()
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert_eq!(sinc(3.0), 0.0);
        assert_eq!(sinc(-7.0), 0.0);
        assert_relative_eq!(sinc(0.5), 2.0 / PI, epsilon = 1e-15);
        assert_relative_eq!(sinc(2.5), 2.0 / (5.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn sinc_derivative_matches_closed_form_near_zero() {
        for &u in &[5e-4, 9.99e-4, 1.001e-3, 0.3] {
            let direct = ((PI * u).cos() * PI * u - (PI * u).sin()) / (PI * u * u);
            assert_relative_eq!(sinc_derivative(u), direct, max_relative = 1e-7);
        }
        assert_relative_eq!(sinc_derivative(1e-6), -PI * PI * 1e-6 / 3.0, max_relative = 1e-10);
        assert_eq!(sinc_derivative(0.0), 0.0);
    }

    #[test]
    fn window_values() {
        let w = hann24();
        let fs = 8000.0;
        assert_eq!(window_eval(0.0, &w, fs), 1.0);
        assert!(window_eval(12.0 / fs, &w, fs).abs() < 1e-15);
        assert_relative_eq!(window_eval(6.0 / fs, &w, fs), 0.5, epsilon = 1e-15);
        assert_eq!(window_eval(12.5 / fs, &w, fs), 0.0);
    }

    #[test]
    fn kernel_values() {
        let w = hann24();
        let fs = 16000.0;
        assert_eq!(kernel_eval(0.0, &w, fs), 1.0);
        for n in 1..15 {
            assert_eq!(kernel_eval(n as f64 / fs, &w, fs), 0.0);
        }
        // (0.5 + 0.5 cos(pi/24)) * 2/pi, evaluated to 20 digits
        let expected = 0.633_896_587_165_192_383_76;
        assert_relative_eq!(kernel_eval(0.5 / fs, &w, fs), expected, max_relative = 1e-14);
    }

    #[test]
    fn kernel_derivative_finite_difference() {
        let w = hann24();
        let fs = 32000.0;
        assert_eq!(kernel_derivative(0.0, &w, fs), 0.0);
        assert_eq!(kernel_derivative(12.01 / fs, &w, fs), 0.0);
        let t = 0.25 / fs;
        let h = 1e-7 / fs;
        let fd = (kernel_eval(t + h, &w, fs) - kernel_eval(t - h, &w, fs)) / (2.0 * h);
        assert_relative_eq!(kernel_derivative(t, &w, fs), fd, max_relative = 1e-6);
    }

    #[test]
    fn output_length_snaps() {
        assert_eq!(output_length(2f64.ln(), 4), 8);
        assert_eq!(output_length(0.0, 17), 17);
        assert_eq!(output_length(1.5f64.ln(), 3), 5);
        assert_eq!(output_length(1e-3, 64), 65);
        assert_eq!(output_length(-1e-3, 64), 64);
    }

    #[test]
    fn identity_at_zero() {
        let a = ResampleAction::new(0.0, 8000.0, hann24(), 40).unwrap();
        let s = build_matrix(&a);
        assert_eq!(s, Array2::<f64>::eye(40));
    }

    #[test]
    fn doubling_entry() {
        let a = ResampleAction::new(2f64.ln(), 8000.0, hann24(), 4).unwrap();
        let s = build_matrix(&a);
        assert_eq!(s.dim(), (8, 4));
        assert_relative_eq!(s[[2, 1]], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ResampleAction::new(f64::NAN, 8000.0, hann24(), 4),
            Err(ResampleError::NonFiniteParameter(_))
        ));
        assert!(matches!(
            ResampleAction::new(f64::INFINITY, 8000.0, hann24(), 4),
            Err(ResampleError::NonFiniteParameter(_))
        ));
        assert!(matches!(WindowSpec::hann(5), Err(ResampleError::InvalidSupport(5))));
        assert!(matches!(WindowSpec::hann(0), Err(ResampleError::InvalidSupport(0))));
        let a = ResampleAction::new(0.1, 8000.0, hann24(), 4).unwrap();
        let x = Signal::zeros(5, 8000.0).unwrap();
        assert!(matches!(apply(&a, &x), Err(ResampleError::LengthMismatch { .. })));
        assert!(Signal::new(vec![0.0, f64::NAN], 1.0).is_err());
        assert!(Signal::new(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn apply_zero_and_identity() {
        let x = Signal::new((0..50).map(|i| (i as f64 * 0.3).sin()).collect(), 8000.0).unwrap();
        let id = ResampleAction::new(0.0, 8000.0, hann24(), 50).unwrap();
        assert_eq!(apply(&id, &x).unwrap().samples(), x.samples());
        let z = Signal::zeros(50, 8000.0).unwrap();
        let a = ResampleAction::new(0.37, 8000.0, hann24(), 50).unwrap();
        assert!(apply(&a, &z).unwrap().samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_matrix_structure() {
        let d = build_derivative_matrix(32, 8000.0, &hann24());
        assert!(d.row(0).iter().all(|v| *v == 0.0));
        for m in 0..32 {
            assert_eq!(d[[m, m]], 0.0);
        }
    }

    #[test]
    fn stencil_matches_dense_derivative() {
        let w = hann24();
        let n = 48;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let d = build_derivative_matrix(n, 16000.0, &w);
        let dense = d.dot(&ndarray::Array1::from(x.clone()));
        let sig = Signal::new(x, 16000.0).unwrap();
        let sparse = apply_derivative(&sig, &w);
        for (a, b) in dense.iter().zip(sparse.samples()) {
            assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn rows_have_bounded_support() {
        let a = ResampleAction::new(0.23, 8000.0, hann24(), 200).unwrap();
        let sp = a.sparse();
        for m in 0..sp.out_length() {
            assert!(sp.row_nonzeros(m) <= 25);
        }
    }
}
