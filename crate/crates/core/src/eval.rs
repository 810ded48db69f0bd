//! Separation quality: SI-SDR, evaluation at other sampling rates, and
//! Pearson correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SeparationModel};
use crate::resample::{resample_to, ResampleError, Signal, WindowSpec};

/// SI-SDR values are clipped to `±SI_SDR_CAP` dB.
pub const SI_SDR_CAP: f64 = 100.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference signal is identically zero")]
    ZeroReference,
    #[error("length mismatch: estimate {estimate}, reference {reference}")]
    LengthMismatch { estimate: usize, reference: usize },
    #[error("rate mismatch: estimate {estimate} Hz, reference {reference} Hz")]
    RateMismatch { estimate: f64, reference: f64 },
    #[error("need at least two paired points, got {0}")]
    TooFewPoints(usize),
    #[error("{0} has zero variance")]
    Degenerate(&'static str),
    #[error("unsupported sampling rate {0} Hz")]
    UnsupportedRate(f64),
    #[error("scene {index}: model produced {outputs} sources but {references} references are available")]
    MissingReferences {
        index: usize,
        outputs: usize,
        references: usize,
    },
    #[error("no scenes to evaluate")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// An estimate and its reference at the same rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    estimate: Signal,
    reference: Signal,
}

impl EvalPair {
    pub fn new(estimate: Signal, reference: Signal) -> Result<Self, EvalError> {
        if estimate.len() != reference.len() {
            return Err(EvalError::LengthMismatch {
                estimate: estimate.len(),
                reference: reference.len(),
            });
        }
        if estimate.sample_rate() != reference.sample_rate() {
            return Err(EvalError::RateMismatch {
                estimate: estimate.sample_rate(),
                reference: reference.sample_rate(),
            });
        }
        if reference.samples().iter().all(|v| *v == 0.0) {
            return Err(EvalError::ZeroReference);
        }
        Ok(Self { estimate, reference })
    }

    pub fn si_sdr(&self) -> f64 {
        si_sdr_unchecked(self.estimate.samples(), self.reference.samples())
    }
}

pub fn si_sdr(pair: &EvalPair) -> f64 {
    pair.si_sdr()
}

/// SI-SDR of raw slices.
pub fn si_sdr_slices(estimate: &[f64], reference: &[f64]) -> Result<f64, EvalError> {
    if estimate.len() != reference.len() {
        return Err(EvalError::LengthMismatch {
            estimate: estimate.len(),
            reference: reference.len(),
        });
    }
    if reference.iter().all(|v| *v == 0.0) {
        return Err(EvalError::ZeroReference);
    }
    Ok(si_sdr_unchecked(estimate, reference))
}

fn si_sdr_unchecked(estimate: &[f64], reference: &[f64]) -> f64 {
    let dot: f64 = estimate.iter().zip(reference).map(|(a, b)| a * b).sum();
    let energy: f64 = reference.iter().map(|v| v * v).sum();
    let alpha = dot / energy;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        noise += (t - e) * (t - e);
    }
    let db = 10.0 * (target / noise).log10();
    if db.is_nan() {
        // 0/0: silent estimate against a silent projection
        -SI_SDR_CAP
    } else {
        db.clamp(-SI_SDR_CAP, SI_SDR_CAP)
    }
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            estimate: xs.len(),
            reference: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::Degenerate("first series"));
    }
    if syy == 0.0 {
        return Err(EvalError::Degenerate("second series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares line `y = slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            estimate: xs.len(),
            reference: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EvalError::Degenerate("x values"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// A mixture with its per-source references, all at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalScene {
    pub mixture: Signal,
    pub references: Vec<Signal>,
}

/// Anything that maps a mixture to per-source estimates at the mixture's rate.
pub trait Separator: Sync {
    fn separate(&self, mixture: &Signal) -> Result<Vec<Signal>, EvalError>;
}

/// A separation model together with the resampler window used for
/// non-native rates.
pub struct RateAdaptive<'a> {
    pub model: &'a SeparationModel,
    pub window: WindowSpec,
}

impl Separator for RateAdaptive<'_> {
    /// SFI models are redesigned for the mixture rate and run natively.
    /// Learned models see the mixture resampled to their own rate, and
    /// their outputs are resampled back.
    fn separate(&self, mixture: &Signal) -> Result<Vec<Signal>, EvalError> {
        let rate = mixture.sample_rate();
        if self.model.sample_rate() == rate {
            return Ok(self.model.model_forward(mixture)?);
        }
        if self.model.is_sfi() {
            return Ok(self.model.at_rate(rate)?.model_forward(mixture)?);
        }
        let inner = resample_to(mixture, self.model.sample_rate(), self.window)?;
        self.model
            .model_forward(&inner)?
            .iter()
            .map(|y| {
                let back = resample_to(y, rate, self.window)?;
                let mut s = back.into_samples();
                s.resize(mixture.len(), 0.0);
                Ok(Signal::new(s, rate)?)
            })
            .collect()
    }
}

/// Mean SI-SDR (over scenes, then sources) at the scenes' rate.
/// Estimates shorter than the references are compared on the common prefix.
pub fn evaluate_scenes(separator: &dyn Separator, scenes: &[EvalScene]) -> Result<f64, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_scene: Vec<Vec<f64>> = scenes
        .par_iter()
        .enumerate()
        .map(|(index, scene)| {
            let est = separator.separate(&scene.mixture)?;
            if est.len() != scene.references.len() {
                return Err(EvalError::MissingReferences {
                    index,
                    outputs: est.len(),
                    references: scene.references.len(),
                });
            }
            est.iter()
                .zip(&scene.references)
                .map(|(e, r)| {
                    let n = e.len().min(r.len());
                    si_sdr_slices(&e.samples()[..n], &r.samples()[..n])
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let sources = per_scene[0].len();
    if per_scene.iter().any(|s| s.len() != sources) {
        return Err(EvalError::MissingReferences {
            index: per_scene.iter().position(|s| s.len() != sources).unwrap_or(0),
            outputs: sources,
            references: 0,
        });
    }
    let mut total = 0.0;
    for s in 0..sources {
        total += per_scene.iter().map(|v| v[s]).sum::<f64>() / per_scene.len() as f64;
    }
    Ok(total / sources as f64)
}

/// Mean SI-SDR of `model` on scenes rendered at `test_rate`.
pub fn evaluate_at_sf(
    model: &SeparationModel,
    scenes: &[EvalScene],
    test_rate: f64,
    window: WindowSpec,
) -> Result<f64, EvalError> {
    if !(test_rate.is_finite() && test_rate > 0.0) {
        return Err(EvalError::UnsupportedRate(test_rate));
    }
    if let Some(s) = scenes.iter().find(|s| s.mixture.sample_rate() != test_rate) {
        return Err(EvalError::RateMismatch {
            estimate: test_rate,
            reference: s.mixture.sample_rate(),
        });
    }
    evaluate_scenes(&RateAdaptive { model, window }, scenes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub model_id: String,
    pub sigma_init: f64,
    pub seed: u64,
    pub test_rate: f64,
    pub sdr_trained: f64,
    pub sdr_test: f64,
    pub degradation: f64,
}

impl DegradationRow {
    pub fn new(model_id: impl Into<String>, sigma_init: f64, seed: u64, test_rate: f64, sdr_trained: f64, sdr_test: f64) -> Self {
        Self {
            model_id: model_id.into(),
            sigma_init,
            seed,
            test_rate,
            sdr_trained,
            sdr_test,
            degradation: sdr_trained - sdr_test,
        }
    }
}
