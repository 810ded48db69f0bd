//! Modulated Gaussian filters and their per-rate digital realization.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Parameters of one analog bandpass prototype, all in rad/s (phase in rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfParams {
    pub mu: f64,
    pub sigma: f64,
    pub phi: f64,
}

/// `A(ω) = exp(-(ω-μ)²/(2σ²) + jφ) + exp(-(ω+μ)²/(2σ²) + jφ)`.
pub fn mgf_frequency_response(omega: f64, p: &MgfParams) -> Complex64 {
    let two_var = 2.0 * p.sigma * p.sigma;
    let lobe = |c: f64| (-(omega - c) * (omega - c) / two_var).exp();
    let phase = Complex64::from_polar(1.0, p.phi);
    phase * (lobe(p.mu) + lobe(-p.mu))
}

/// Frequency-sampling design of a length-`m` real kernel at `sample_rate`.
///
/// Bin `k` sits at `ω_k = 2π F_s k / m`; bins above Nyquist are negative
/// frequencies and take the conjugate of the response at `|ω_k|`, so the
/// inverse DFT is real and the phase `φ` survives as `cos(μt + φ)`
/// modulation. The result is rotated by `⌊m/2⌋` to centre the envelope.
pub fn design_filter(p: &MgfParams, sample_rate: f64, m: usize) -> Vec<f64> {
    assert!(m >= 2, "kernel length must be at least 2");
    let mut spectrum: Vec<Complex64> = (0..m)
        .map(|k| {
            let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            let omega = 2.0 * PI * sample_rate * signed / m as f64;
            if signed >= 0.0 {
                mgf_frequency_response(omega, p)
            } else {
                mgf_frequency_response(-omega, p).conj()
            }
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut spectrum);
    let shift = m / 2;
    let mut out = vec![0.0; m];
    for (n, v) in spectrum.iter().enumerate() {
        out[(n + shift) % m] = v.re / m as f64;
    }
    out
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (rad/s) on a mel grid over `(0, π·F_s]`, phases
/// alternating `0, π/2`, and a common `σ`.
pub fn init_mgf_bank(channels: usize, trained_rate: f64, sigma: f64) -> Vec<MgfParams> {
    let top = hz_to_mel(trained_rate / 2.0);
    (0..channels)
        .map(|c| {
            let mel = top * (c + 1) as f64 / channels as f64;
            MgfParams {
                mu: 2.0 * PI * mel_to_hz(mel),
                sigma,
                phi: if c % 2 == 0 { 0.0 } else { PI / 2.0 },
            }
        })
        .collect()
}
