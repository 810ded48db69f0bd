//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints its PASS/FAIL line even when all of them pass.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfi_lee::eval::{pearson, si_sdr_slices};
use sfi_lee::harness::config::ExperimentConfig;
use sfi_lee::harness::experiment::{run_perturbation_knob, run_sigma_sweep};
use sfi_lee::harness::report::rows_to_csv;
use sfi_lee::lie::{lie, lie_chain_terms, Estimator, EstimatorSettings, GroupAction, LinearProbe};
use sfi_lee::metrics::{
    entire_ln_lee, equivariance_floor, layerwise_bound_terms, BoundTerms, lln_lee, mask_ln_lee, sfi_metrics, MetricKind,
};
use sfi_lee::model::{zoo, SeparationModel};
use sfi_lee::resample::{apply, build_derivative_matrix, build_matrix, ResampleAction, Signal, WindowSpec};

/// Upper bounds for the mask-focused metrics of the all-ones-mask model,
/// measured once with the default estimator (LLN-LEE -10.85, Mask-LN-LEE
/// -10.40, identity map -10.53) and frozen with some headroom. dLN-LEE is a
/// difference of logs, so its floor is zero rather than a log ratio.
const FLOOR: f64 = -10.0;
const DELTA_FLOOR: f64 = 1e-9;

type Check = Result<String, String>;

struct Outcome {
    name: &'static str,
    result: Check,
    elapsed: Duration,
    limit: Duration,
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Sum of three random tones below a quarter of the rate.
fn tones(rng: &mut ChaCha8Rng, n: usize, fs: f64) -> Signal {
    let parts: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.3..1.0),
                rng.random_range(50.0..fs / 4.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            parts.iter().map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin()).sum()
        })
        .collect();
    Signal::new(x, fs).unwrap()
}

fn segments(seed: u64, count: usize, n: usize, fs: f64) -> Vec<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| tones(&mut rng, n, fs)).collect()
}

fn identity_at_zero() -> Check {
    let w = WindowSpec::default();
    let mut worst = 0.0f64;
    for n in [16, 160, 1600] {
        let s = build_matrix(&ResampleAction::new(0.0, 16000.0, w, n).map_err(|e| e.to_string())?);
        let e = max_abs(&(s - Array2::<f64>::eye(n)));
        worst = worst.max(e);
    }
    ensure(worst <= 1e-12, format!("max |S(0) - I| = {worst:.2e}"))
}

fn sine_upsampling() -> Check {
    let fs = 32000.0;
    let n = 3200;
    let f = 440.0;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
    let r = 1.5f64.ln();
    let action = ResampleAction::new(r, fs, WindowSpec::hann(24).unwrap(), n).map_err(|e| e.to_string())?;
    let y = apply(&action, &Signal::new(x, fs).unwrap()).map_err(|e| e.to_string())?;
    let out_rate = fs * 1.5;
    let margin = 2 * 24 * 3 / 2;
    let len = y.len();
    let err = y.samples()[margin..len - margin]
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let m = k + margin;
            (v - (2.0 * PI * f * m as f64 / out_rate).sin()).abs()
        })
        .fold(0.0, f64::max);
    ensure(
        err <= 1e-3,
        format!("{len} samples at {out_rate} Hz, interior max error {err:.2e}"),
    )
}

fn derivative_matches_fd() -> Check {
    let n = 64;
    let fs = 16000.0;
    let w = WindowSpec::default();
    let d = build_derivative_matrix(n, fs, &w);
    let fd_err = |r: f64| -> Result<f64, String> {
        let plus = build_matrix(&ResampleAction::with_out_length(r, fs, w, n, n).map_err(|e| e.to_string())?);
        let minus = build_matrix(&ResampleAction::with_out_length(-r, fs, w, n, n).map_err(|e| e.to_string())?);
        Ok(max_abs(&(&d - &((plus - minus) / (2.0 * r)))))
    };
    let at = fd_err(1e-5)?;
    let rs = [1e-2, 1e-3, 1e-4];
    let errs = rs.iter().map(|r| fd_err(*r)).collect::<Result<Vec<_>, _>>()?;
    let lx: Vec<f64> = rs.iter().map(|r| r.log10()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.log10()).collect();
    let (slope, _) = sfi_lee::eval::least_squares(&lx, &ly).map_err(|e| e.to_string())?;
    ensure(
        at <= 1e-6 && (slope - 2.0).abs() <= 0.2,
        format!("error at r=1e-5 {at:.2e}, log-log slope {slope:.3}"),
    )
}

fn linear_probes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fd = EstimatorSettings {
        estimator: Estimator::CentralFd,
        ..Default::default()
    };
    let lin = EstimatorSettings::default();
    let mut worst_fd = 0.0f64;
    let mut worst_lin = 0.0f64;
    for _ in 0..20 {
        let fs = [8000.0, 16000.0, 32000.0][rng.random_range(0..3)];
        let n_in = rng.random_range(16..=64);
        let n_out = rng.random_range(16..=64);
        let m = Array2::from_shape_simple_fn((n_out, n_in), || rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_simple_fn((1, n_in), || rng.random_range(-1.0..1.0));
        let probe = LinearProbe::signal(m, GroupAction::signal(fs, Default::default()));
        let want = probe.closed_form(&x);
        let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (settings, worst) in [(&fd, &mut worst_fd), (&lin, &mut worst_lin)] {
            let got = lie(&probe, &x, settings).map_err(|e| e.to_string())?.vector;
            let e = (&got - &want).iter().map(|v| v * v).sum::<f64>().sqrt() / scale;
            *worst = worst.max(e);
        }
    }
    ensure(
        worst_fd <= 1e-4 && worst_lin <= 1e-4,
        format!("worst relative error: finite difference {worst_fd:.2e}, linearized {worst_lin:.2e}"),
    )
}

fn chain_rule() -> Check {
    let settings = EstimatorSettings::default();
    let worst = |m: &SeparationModel, segs: &[Signal]| -> Result<f64, String> {
        segs.iter().try_fold(0.0f64, |acc, x| {
            let t = lie_chain_terms(m, x.samples(), &settings).map_err(|e| e.to_string())?;
            Ok(acc.max(t.residual))
        })
    };
    let linear = zoo::all_linear(5, 16000.0, 64).map_err(|e| e.to_string())?;
    let lin = worst(&linear, &segments(11, 10, 64, 16000.0))?;
    let toy = zoo::tiny_sfi(5, 16000.0, 2.0 * PI * 400.0).map_err(|e| e.to_string())?;
    let nonlin = worst(&toy, &segments(12, 10, 1600, 16000.0))?;
    ensure(
        lin <= 1e-6 && nonlin <= 0.05,
        format!("worst residual: linear toy {lin:.2e}, nonlinear toy {nonlin:.2e}"),
    )
}

fn scale_invariance() -> Check {
    let settings = EstimatorSettings::default();
    let segs = segments(21, 4, 1600, 16000.0);
    let base = zoo::tiny_sfi(3, 16000.0, 2.0 * PI * 400.0).map_err(|e| e.to_string())?;
    let metrics = |m: &SeparationModel| -> Result<[Vec<f64>; 3], String> {
        let e = |x: sfi_lee::metrics::MetricError| x.to_string();
        Ok([
            entire_ln_lee(m, &segs, &settings).map_err(e)?.per_segment,
            mask_ln_lee(m, &segs, &settings).map_err(e)?.per_segment,
            lln_lee(m, &segs, &settings).map_err(e)?.per_segment,
        ])
    };
    let [ln0, mask0, lln0] = metrics(&base)?;
    let mut out = base.clone();
    out.scale_decoder(10.0);
    let [ln_o, mask_o, lln_o] = metrics(&out)?;
    let mut lat = base.clone();
    lat.scale_encoder(10.0);
    let [ln_l, mask_l, _] = metrics(&lat)?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let invariant = [diff(&ln0, &ln_o), diff(&mask0, &mask_o), diff(&ln0, &ln_l), diff(&mask0, &mask_l)]
        .into_iter()
        .fold(0.0, f64::max);
    let shift = lln0
        .iter()
        .zip(&lln_o)
        .map(|(a, b)| (b - a - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(
        invariant <= 1e-9 && shift <= 1e-6,
        format!("LN/Mask-LN max change {invariant:.2e}, LLN shift error {shift:.2e}"),
    )
}

fn floor() -> Check {
    let settings = EstimatorSettings::default();
    let segs = segments(31, 4, 1600, 16000.0);
    let m = zoo::all_ones(0, 16000.0, 2.0 * PI * 400.0).map_err(|e| e.to_string())?;
    let all = sfi_metrics(&m, &segs, &settings).map_err(|e| e.to_string())?;
    let identity = equivariance_floor(&m, &segs, &settings).map_err(|e| e.to_string())?;
    let mut msg = format!("identity floor {:.3}", identity.aggregate);
    let mut ok = true;
    for r in all.iter().filter(|r| r.kind.mask_focused()) {
        let top = r.per_segment.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bound = if r.kind == MetricKind::DeltaLnLee { DELTA_FLOOR } else { FLOOR };
        msg += &format!(", {} max {top:.3} (bound {bound})", r.kind.name());
        ok &= top <= bound;
    }
    ensure(ok, msg)
}

fn bounds_on_zoo() -> Check {
    let settings = EstimatorSettings::default();
    let fs = 16000.0;
    let long = segments(41, 10, 1600, fs);
    let short = segments(42, 10, 64, fs);
    let e = |x: sfi_lee::model::ModelError| x.to_string();
    let models: Vec<(&str, SeparationModel, &[Signal])> = vec![
        ("learned", zoo::tiny_learned(0, fs).map_err(e)?, &long),
        ("sfi", zoo::tiny_sfi(0, fs, 2.0 * PI * 400.0).map_err(e)?, &long),
        ("all-ones", zoo::all_ones(0, fs, 2.0 * PI * 400.0).map_err(e)?, &long),
        ("all-linear", zoo::all_linear(0, fs, 64).map_err(e)?, &short),
        ("dct", zoo::orthogonal_dct_pair(16, fs).map_err(e)?, &long),
    ];
    let mut msg = Vec::new();
    let mut ok = true;
    for (name, m, segs) in &models {
        let terms = layerwise_bound_terms(m, segs, &settings).map_err(|e| e.to_string())?;
        // violations in units of the allowed tolerance: 5% of ‖ℒf_NN‖ plus a
        // roundoff allowance for models whose terms cancel to nothing
        let worst = |f: fn(&BoundTerms) -> f64| {
            terms
                .iter()
                .map(|t| f(t) / (0.05 * t.total + 1e-10 * (t.dec + t.mask + t.enc)))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let upper = worst(|t| t.total - (t.dec + t.mask + t.enc));
        let lower = worst(|t| t.total - t.dec_plus_enc - t.mask);
        ok &= upper <= 1.0 && lower <= 1.0;
        msg.push(format!("{name} {upper:.3}/{lower:.3}"));
    }
    ensure(ok, format!("worst upper/lower violation over tolerance: {}", msg.join(", ")))
}

fn knob() -> Check {
    let cfg = ExperimentConfig::from_toml(
        "test_rates = [16000.0]\nseeds = 1\nscenes = 8\nscene_seconds = 5.0\nsegment_seconds = 5.0\n",
    )
    .map_err(|e| e.to_string())?;
    let lambdas = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let out = run_perturbation_knob(&cfg, &lambdas).map_err(|e| e.to_string())?;
    let mut msg = Vec::new();
    let mut ok = true;
    for k in [MetricKind::LlnLee, MetricKind::DeltaLnLee, MetricKind::MaskLnLee] {
        let rl = out.rho_lambda(k).unwrap_or(f64::NAN);
        let rd = out.rho_degradation(k, 16000.0).unwrap_or(f64::NAN);
        ok &= rl >= 0.9 && rd >= 0.7;
        msg.push(format!("{} rho(lambda) {rl:.3} rho(deg) {rd:.3}", k.name()));
    }
    ensure(ok, msg.join(", "))
}

fn eval_examples() -> Check {
    let s = [0.3, -1.2, 0.7, 2.0];
    let two: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
    let xs = [0.5, 1.7, -2.0, 3.3, 0.0];
    let affine: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    let e = |x: sfi_lee::eval::EvalError| x.to_string();
    let got = [
        si_sdr_slices(&s, &s).map_err(e)?,
        si_sdr_slices(&two, &s).map_err(e)?,
        si_sdr_slices(&[1.0, 1.0], &[1.0, 0.0]).map_err(e)?,
        pearson(&xs, &affine).map_err(e)?,
        pearson(&xs, &neg).map_err(e)?,
        pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(e)?,
    ];
    let ok = got[0] == 100.0
        && got[1] == 100.0
        && got[2] == 0.0
        && (got[3] - 1.0).abs() <= 1e-12
        && (got[4] + 1.0).abs() <= 1e-12
        && (got[5] - 0.5).abs() <= 1e-12
        && si_sdr_slices(&[1.0], &[0.0]).is_err()
        && pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err();
    ensure(ok, format!("values {got:?}"))
}

fn sweep_determinism() -> Check {
    let cfg = ExperimentConfig::from_toml(
        "test_rates = [8000.0, 16000.0]\nsigma_init_pi = [100.0, 400.0, 800.0]\nseeds = 2\n\
         scenes = 3\nscene_seconds = 0.25\nsegment_seconds = 0.25\n",
    )
    .map_err(|e| e.to_string())?;
    let a = rows_to_csv(&run_sigma_sweep(&cfg).map_err(|e| e.to_string())?.rows).map_err(|e| e.to_string())?;
    let b = rows_to_csv(&run_sigma_sweep(&cfg).map_err(|e| e.to_string())?.rows).map_err(|e| e.to_string())?;
    ensure(
        a == b && !a.is_empty(),
        format!("{} CSV bytes, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let checks: [(&'static str, fn() -> Check, u64); 11] = [
        ("1 resampler identity at r = 0", identity_at_zero, 1),
        ("2 sine upsampling by 1.5", sine_upsampling, 1),
        ("3 derivative matrix vs finite differences", derivative_matches_fd, 5),
        ("4 estimators on random linear probes", linear_probes, 30),
        ("5 chain-rule residual", chain_rule, 60),
        ("6 scale invariance", scale_invariance, 10),
        ("7 equivariance floor", floor, 30),
        ("8 triangle inequality and lower bound", bounds_on_zoo, 60),
        ("9 perturbation knob correlations", knob, 600),
        ("10 SI-SDR and Pearson examples", eval_examples, 1),
        ("11 sweep CSV determinism", sweep_determinism, 600),
    ];
    let mut outcomes = Vec::new();
    for (name, f, limit) in checks {
        let start = Instant::now();
        let result = f();
        let o = Outcome {
            name,
            result,
            elapsed: start.elapsed(),
            limit: Duration::from_secs(limit),
        };
        let (status, detail) = match (&o.result, o.elapsed <= o.limit) {
            (Ok(m), true) => ("PASS", m.clone()),
            (Ok(m), false) => ("FAIL", format!("{m}; over the {} s budget", limit)),
            (Err(m), _) => ("FAIL", m.clone()),
        };
        println!("{status} {}: {detail} [{:.2} s]", o.name, o.elapsed.as_secs_f64());
        outcomes.push((status, o));
    }
    let failed = outcomes.iter().filter(|(s, _)| *s == "FAIL").count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
