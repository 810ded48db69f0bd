//! Equivariance metrics as dataset expectations over segments.
//!
//! Norms are Euclidean over every element of the value, all sources
//! concatenated. Segments are processed in parallel and reduced in index
//! order.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{
    as_row, frobenius, jvp, lie, lie_chain_terms, EstimatorSettings, FnProbe, GroupAction, LieError, ModelProbe,
    Part, ProbeMap,
};
use crate::model::SeparationModel;
use crate::resample::Signal;

/// Ratios below `10^LOG_RATIO_MIN` (including exact zeros) are clamped.
pub const LOG_RATIO_MIN: f64 = -16.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no segments to average over")]
    NoSegments,
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: LieError,
    },
    #[error("segment {index}: reference output is identically zero")]
    ZeroOutput { index: usize },
    #[error("segment {index}: non-finite metric value")]
    NonFinite { index: usize },
    #[error("segment {index} has rate {found} Hz, model runs at {expected} Hz")]
    RateMismatch { index: usize, expected: f64, found: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "LEE")]
    Lee,
    #[serde(rename = "LN-LEE")]
    LnLee,
    #[serde(rename = "LLN-LEE")]
    LlnLee,
    #[serde(rename = "dLN-LEE")]
    DeltaLnLee,
    #[serde(rename = "Mask-LN-LEE")]
    MaskLnLee,
}

impl MetricKind {
    pub const SFI: [MetricKind; 4] = [
        MetricKind::LnLee,
        MetricKind::LlnLee,
        MetricKind::DeltaLnLee,
        MetricKind::MaskLnLee,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Lee => "LEE",
            MetricKind::LnLee => "LN-LEE",
            MetricKind::LlnLee => "LLN-LEE",
            MetricKind::DeltaLnLee => "dLN-LEE",
            MetricKind::MaskLnLee => "Mask-LN-LEE",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::Lee, Self::LnLee, Self::LlnLee, Self::DeltaLnLee, Self::MaskLnLee]
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Whether the metric isolates the mask predictor.
    pub fn mask_focused(&self) -> bool {
        matches!(self, Self::LlnLee | Self::DeltaLnLee | Self::MaskLnLee)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub settings: EstimatorSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub per_segment: Vec<f64>,
    pub aggregate: f64,
    pub segment_count: usize,
    pub seed: u64,
    pub model_id: String,
}

impl MetricResult {
    fn from_values(kind: MetricKind, per_segment: Vec<f64>) -> Result<Self, MetricError> {
        if per_segment.is_empty() {
            return Err(MetricError::NoSegments);
        }
        if let Some(index) = per_segment.iter().position(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite { index });
        }
        let aggregate = per_segment.iter().sum::<f64>() / per_segment.len() as f64;
        Ok(Self {
            kind,
            segment_count: per_segment.len(),
            per_segment,
            aggregate,
            seed: 0,
            model_id: String::new(),
        })
    }

    pub fn labelled(mut self, model_id: impl Into<String>, seed: u64) -> Self {
        self.model_id = model_id.into();
        self.seed = seed;
        self
    }
}

/// `log10(num / den)` with the ratio clamped at `10^LOG_RATIO_MIN`.
pub fn log_ratio(num: f64, den: f64) -> f64 {
    (num / den).max(10f64.powf(LOG_RATIO_MIN)).log10()
}

fn per_segment<T, R, F>(items: &[T], f: F) -> Result<Vec<R>, MetricError>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R, MetricError> + Sync,
{
    if items.is_empty() {
        return Err(MetricError::NoSegments);
    }
    items
        .par_iter()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn seg_err(index: usize) -> impl Fn(LieError) -> MetricError {
    move |source| MetricError::Segment { index, source }
}

/// Mean of `‖ℒf(x)‖² / V` with `V` the element count of `f(x)`.
pub fn lee(f: &dyn ProbeMap, segments: &[Array2<f64>], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    let vals = per_segment(segments, |i, x| {
        let e = lie(f, x, settings).map_err(seg_err(i))?;
        Ok(e.norm().powi(2) / e.vector.len() as f64)
    })?;
    MetricResult::from_values(MetricKind::Lee, vals)
}

/// Mean of `log10(‖ℒf(x)‖ / ‖f(x)‖)`.
pub fn ln_lee(f: &dyn ProbeMap, segments: &[Array2<f64>], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    let vals = per_segment(segments, |i, x| {
        let y = f.eval(x).map_err(seg_err(i))?;
        let den = frobenius(&y);
        if den == 0.0 {
            return Err(MetricError::ZeroOutput { index: i });
        }
        let e = lie(f, x, settings).map_err(seg_err(i))?;
        Ok(log_ratio(e.norm(), den))
    })?;
    MetricResult::from_values(MetricKind::LnLee, vals)
}

fn rows(model: &SeparationModel, segments: &[Signal]) -> Result<Vec<Array2<f64>>, MetricError> {
    segments
        .iter()
        .enumerate()
        .map(|(index, s)| {
            if s.sample_rate() != model.sample_rate() {
                return Err(MetricError::RateMismatch {
                    index,
                    expected: model.sample_rate(),
                    found: s.sample_rate(),
                });
            }
            Ok(as_row(s.samples()))
        })
        .collect()
}

/// LN-LEE of the whole network `f_NN`.
pub fn entire_ln_lee(model: &SeparationModel, segments: &[Signal], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    let probe = ModelProbe::new(model, Part::Full, settings.window);
    ln_lee(&probe, &rows(model, segments)?, settings)
}

/// LN-LEE of `f_no_mask = f_dec ∘ f_enc`.
pub fn no_mask_ln_lee(model: &SeparationModel, segments: &[Signal], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    let probe = ModelProbe::new(model, Part::NoMask, settings.window);
    ln_lee(&probe, &rows(model, segments)?, settings)
}

/// Per segment: `(ℒf_mask(u), v)` with `u = f_enc(x)`, `v = f_mask(u)`.
fn mask_term(
    model: &SeparationModel,
    x: &Signal,
    index: usize,
    settings: &EstimatorSettings,
) -> Result<(Array2<f64>, Array2<f64>), MetricError> {
    let err = seg_err(index);
    let u = model.encode(x.samples()).map_err(|e| err(e.into()))?;
    let v = model.mask(&u).map_err(|e| err(e.into()))?;
    if frobenius(&v) == 0.0 {
        return Err(MetricError::ZeroOutput { index });
    }
    let l = lie(&ModelProbe::new(model, Part::Mask, settings.window), &u, settings).map_err(seg_err(index))?;
    Ok((l.vector, v))
}

/// Mean of `log10(‖J_dec ℒf_mask(f_enc(x))‖ / ‖(f_mask ∘ f_enc)(x)‖)`.
pub fn lln_lee(model: &SeparationModel, segments: &[Signal], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    rows(model, segments)?;
    let dec = ModelProbe::new(model, Part::Decoder, settings.window);
    let vals = per_segment(segments, |i, x| {
        let (l, v) = mask_term(model, x, i, settings)?;
        let pushed = jvp(&dec, &v, &l, settings.jvp_eps).map_err(seg_err(i))?;
        Ok(log_ratio(frobenius(&pushed), frobenius(&v)))
    })?;
    MetricResult::from_values(MetricKind::LlnLee, vals)
}

/// Mean of `log10(‖ℒf_mask(f_enc(x))‖ / ‖(f_mask ∘ f_enc)(x)‖)`.
pub fn mask_ln_lee(model: &SeparationModel, segments: &[Signal], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    rows(model, segments)?;
    let vals = per_segment(segments, |i, x| {
        let (l, v) = mask_term(model, x, i, settings)?;
        Ok(log_ratio(frobenius(&l), frobenius(&v)))
    })?;
    MetricResult::from_values(MetricKind::MaskLnLee, vals)
}

/// `LN-LEE(f_NN) − LN-LEE(f_no_mask)` on identical segments and settings.
/// Per-segment differences are kept; their mean equals the difference of
/// the two aggregates.
pub fn delta_ln_lee(model: &SeparationModel, segments: &[Signal], settings: &EstimatorSettings) -> Result<MetricResult, MetricError> {
    let full = entire_ln_lee(model, segments, settings)?;
    let bare = no_mask_ln_lee(model, segments, settings)?;
    delta_of(&full, &bare)
}

fn delta_of(full: &MetricResult, bare: &MetricResult) -> Result<MetricResult, MetricError> {
    let vals = full
        .per_segment
        .iter()
        .zip(&bare.per_segment)
        .map(|(a, b)| a - b)
        .collect();
    MetricResult::from_values(MetricKind::DeltaLnLee, vals)
}

/// LN-LEE, LLN-LEE, ΔLN-LEE and Mask-LN-LEE (in [`MetricKind::SFI`] order),
/// sharing the mask-predictor Lie vector between LLN and Mask-LN. Values
/// are identical to the individual functions.
pub fn sfi_metrics(
    model: &SeparationModel,
    segments: &[Signal],
    settings: &EstimatorSettings,
) -> Result<[MetricResult; 4], MetricError> {
    let full = entire_ln_lee(model, segments, settings)?;
    let bare = no_mask_ln_lee(model, segments, settings)?;
    let delta = delta_of(&full, &bare)?;
    let dec = ModelProbe::new(model, Part::Decoder, settings.window);
    let pairs = per_segment(segments, |i, x| {
        let (l, v) = mask_term(model, x, i, settings)?;
        let pushed = jvp(&dec, &v, &l, settings.jvp_eps).map_err(seg_err(i))?;
        let nv = frobenius(&v);
        Ok((log_ratio(frobenius(&pushed), nv), log_ratio(frobenius(&l), nv)))
    })?;
    let (lln, mask): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok([
        full,
        MetricResult::from_values(MetricKind::LlnLee, lln)?,
        delta,
        MetricResult::from_values(MetricKind::MaskLnLee, mask)?,
    ])
}

pub fn compute_metric(
    model: &SeparationModel,
    kind: MetricKind,
    segments: &[Signal],
    settings: &EstimatorSettings,
) -> Result<MetricResult, MetricError> {
    match kind {
        MetricKind::Lee => {
            let probe = ModelProbe::new(model, Part::Full, settings.window);
            lee(&probe, &rows(model, segments)?, settings)
        }
        MetricKind::LnLee => entire_ln_lee(model, segments, settings),
        MetricKind::LlnLee => lln_lee(model, segments, settings),
        MetricKind::DeltaLnLee => delta_ln_lee(model, segments, settings),
        MetricKind::MaskLnLee => mask_ln_lee(model, segments, settings),
    }
}

/// Norms of the three chain-rule terms for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    /// `‖ℒf_dec‖`
    pub dec: f64,
    /// `‖J_dec ℒf_mask‖`
    pub mask: f64,
    /// `‖J_dec J_mask ℒf_enc‖`
    pub enc: f64,
    /// `‖ℒf_NN‖`
    pub total: f64,
    /// `‖ℒf_dec + J_dec J_mask ℒf_enc‖`
    pub dec_plus_enc: f64,
    /// `‖ℒf_no_mask‖`
    pub no_mask: f64,
    pub residual: f64,
}

impl BoundTerms {
    /// `dec + mask + enc − total`, scaled by `total`.
    pub fn upper_slack(&self) -> f64 {
        (self.dec + self.mask + self.enc - self.total) / self.total
    }

    /// `mask − (total − ‖ℒf_dec + J_dec J_mask ℒf_enc‖)`, scaled by `total`.
    pub fn lower_slack(&self) -> f64 {
        (self.mask - (self.total - self.dec_plus_enc)) / self.total
    }

    /// Lower bound with `ℒf_no_mask` standing in for the non-mask terms.
    pub fn lower_slack_no_mask(&self) -> f64 {
        (self.mask - (self.total - self.no_mask)) / self.total
    }
}

pub fn layerwise_bound_terms(
    model: &SeparationModel,
    segments: &[Signal],
    settings: &EstimatorSettings,
) -> Result<Vec<BoundTerms>, MetricError> {
    rows(model, segments)?;
    let no_mask = ModelProbe::new(model, Part::NoMask, settings.window);
    segments
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let t = lie_chain_terms(model, x.samples(), settings).map_err(seg_err(i))?;
            let nm = lie(&no_mask, &as_row(x.samples()), settings).map_err(seg_err(i))?;
            Ok(BoundTerms {
                dec: frobenius(&t.term_dec),
                mask: frobenius(&t.term_mask),
                enc: frobenius(&t.term_enc),
                total: frobenius(&t.total),
                dec_plus_enc: frobenius(&(&t.term_dec + &t.term_enc)),
                no_mask: nm.norm(),
                residual: t.residual,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// LN-LEE of the latent identity map on `f_enc(x)`, evaluated through the
/// generic (non-linear) estimator path: the value an exactly equivariant
/// mask predictor attains with these settings.
pub fn equivariance_floor(
    model: &SeparationModel,
    segments: &[Signal],
    settings: &EstimatorSettings,
) -> Result<MetricResult, MetricError> {
    rows(model, segments)?;
    let action = GroupAction::latent(model.frame_rate(), settings.window);
    let identity = FnProbe {
        input: action,
        output: action,
        linear: false,
        f: |u: &Array2<f64>| Ok(u.clone()),
    };
    let latents = segments
        .iter()
        .enumerate()
        .map(|(i, x)| model.encode(x.samples()).map_err(|e| seg_err(i)(e.into())))
        .collect::<Result<Vec<_>, _>>()?;
    ln_lee(&identity, &latents, settings)
}
