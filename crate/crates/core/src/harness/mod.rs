//! Experiment harness: configuration, data, the σ sweep and perturbation
//! knob experiments, and report files.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;
pub mod synth;
pub mod wav;

use thiserror::Error;

use crate::eval::EvalError;
use crate::lie::LieError;
use crate::metrics::MetricError;
use crate::model::{ModelError, WeightError};
use crate::resample::ResampleError;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SFI_LEE_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] wav::WavError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("report: {0}")]
    Report(String),
    #[error("{experiment} tuple {tuple}: {source}")]
    Tuple {
        experiment: String,
        tuple: String,
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    /// 2 for configuration problems, 3 for bad or missing data, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) | Self::Io(_) | Self::Wav(_) | Self::Report(_) => 3,
            Self::Weights(WeightError::SpecMismatch { .. }) => 2,
            Self::Weights(_) => 3,
            Self::Model(ModelError::InvalidSpec(_)) => 2,
            Self::Model(ModelError::Weights(WeightError::SpecMismatch { .. })) => 2,
            Self::Model(ModelError::Weights(_)) => 3,
            Self::Model(_) | Self::Resample(_) | Self::Lie(_) => 4,
            Self::Metric(MetricError::NoSegments | MetricError::ZeroOutput { .. }) => 3,
            Self::Metric(_) => 4,
            Self::Eval(EvalError::ZeroReference | EvalError::MissingReferences { .. } | EvalError::Empty) => 3,
            Self::Eval(EvalError::RateMismatch { .. } | EvalError::LengthMismatch { .. }) => 3,
            Self::Eval(_) => 4,
            Self::Tuple { source, .. } => source.exit_code(),
        }
    }
}

/// Size the global worker pool from `SFI_LEE_THREADS` when it is set.
/// Returns the number of threads requested, if any.
pub fn configure_threads() -> Result<Option<usize>, HarnessError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a pool that already exists (tests, repeated calls) keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
