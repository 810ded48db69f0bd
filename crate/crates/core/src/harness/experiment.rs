//! The σ sweep and the perturbation knob.
//!
//! Both run one tuple per (setting, seed) on the worker pool. A tuple builds
//! its model from seeded initial weights, computes the four SFI metrics on
//! leading segments at the trained rate, and measures the SI-SDR drop from
//! the trained rate to each test rate. Rows are assembled in tuple order.

use std::path::Path;

use rayon::prelude::*;

use crate::eval::evaluate_at_sf;
use crate::lie::EstimatorSettings;
use crate::metrics::{sfi_metrics, MetricKind};
use crate::model::{init_weights, load_weights, FilterSource, SeparationModel, WeightBundle, WeightError};
use crate::resample::WindowSpec;

use super::config::{ExperimentConfig, SyntheticKind};
use super::dataset::{extract_segments, Dataset, Segments, SkippedTrack};
use super::report::{correlations, Correlation, ReportRow};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub correlations: Vec<Correlation>,
    pub skipped: Vec<SkippedTrack>,
    /// Description of the scenes or tracks used.
    pub dataset: serde_json::Value,
}

impl ExperimentOutput {
    pub fn raw_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.averaged)
    }

    pub fn averaged_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.averaged)
    }

    /// ρ of `metric` against the degradation at `test_rate` (metrics at the
    /// trained rate).
    pub fn rho_degradation(&self, metric: MetricKind, test_rate: f64) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.metric == metric.name() && c.test_rate == Some(test_rate) && c.metric_rate == self.trained_rate())
            .map(|c| c.rho)
    }

    /// ρ of λ against `metric` (knob only).
    pub fn rho_lambda(&self, metric: MetricKind) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.metric == metric.name() && c.test_rate.is_none() && c.metric_rate == self.trained_rate())
            .map(|c| c.rho)
    }

    fn trained_rate(&self) -> f64 {
        self.rows.first().map(|r| r.metric_rate).unwrap_or(0.0)
    }
}

/// Segments at the trained rate and at every test rate.
pub struct Prepared {
    pub trained: Segments,
    pub tests: Vec<(f64, Segments)>,
}

pub fn prepare(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Prepared, HarnessError> {
    let window = cfg.window()?;
    let trained = extract_segments(&dataset.scenes_at(cfg.trained_rate, window)?, cfg.segment_seconds)?;
    let tests = cfg
        .test_rates
        .iter()
        .map(|&rate| {
            let seg = extract_segments(&dataset.scenes_at(rate, window)?, cfg.segment_seconds)?;
            if seg.names != trained.names {
                return Err(HarnessError::Data(format!(
                    "tracks kept at {rate} Hz differ from those kept at {} Hz",
                    cfg.trained_rate
                )));
            }
            Ok((rate, seg))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(Prepared { trained, tests })
}

pub fn model_id(cfg: &ExperimentConfig) -> String {
    match cfg.filter_source {
        FilterSource::Mgf => "tcn-mgf".into(),
        FilterSource::Learned => "tcn-learned".into(),
    }
}

/// Metric values `(kind, metric_rate, value)` and degradations
/// `(test_rate, dB)` of one model.
pub struct TupleResult {
    pub metrics: Vec<(MetricKind, f64, f64)>,
    pub degradations: Vec<(f64, f64)>,
}

pub fn run_tuple(
    model: &SeparationModel,
    prepared: &Prepared,
    settings: &EstimatorSettings,
    window: WindowSpec,
    metrics_at_test_rates: bool,
) -> Result<TupleResult, HarnessError> {
    let trained_rate = model.sample_rate();
    let mut metrics = Vec::new();
    let values = sfi_metrics(model, &prepared.trained.mixtures(), settings)?;
    metrics.extend(values.iter().map(|m| (m.kind, trained_rate, m.aggregate)));
    if metrics_at_test_rates {
        for (rate, seg) in &prepared.tests {
            let at = model.at_rate(*rate)?;
            let values = sfi_metrics(&at, &seg.mixtures(), settings)?;
            metrics.extend(values.iter().map(|m| (m.kind, *rate, m.aggregate)));
        }
    }
    let sdr_trained = evaluate_at_sf(model, &prepared.trained.scenes, trained_rate, window)?;
    let degradations = prepared
        .tests
        .iter()
        .map(|(rate, seg)| Ok((*rate, sdr_trained - evaluate_at_sf(model, &seg.scenes, *rate, window)?)))
        .collect::<Result<_, HarnessError>>()?;
    Ok(TupleResult { metrics, degradations })
}

/// One experiment setting: σ in rad/s and λ.
struct Setting {
    sigma: f64,
    lambda: f64,
}

fn assemble(
    experiment: &str,
    model: &str,
    settings: &[Setting],
    seeds: &[u64],
    results: Vec<TupleResult>,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let mut averaged = Vec::new();
    for (si, s) in settings.iter().enumerate() {
        let chunk = &results[si * seeds.len()..(si + 1) * seeds.len()];
        let first = &chunk[0];
        for (mi, &(kind, mrate, _)) in first.metrics.iter().enumerate() {
            for (di, &(trate, _)) in first.degradations.iter().enumerate() {
                let row = |seed, value, degradation, avg| ReportRow {
                    experiment: experiment.to_string(),
                    model: model.to_string(),
                    sigma_init: s.sigma,
                    lambda: s.lambda,
                    seed,
                    metric: kind.name().to_string(),
                    value,
                    metric_rate: mrate,
                    test_rate: trate,
                    degradation,
                    averaged: avg,
                };
                for (seed, r) in seeds.iter().zip(chunk) {
                    rows.push(row(Some(*seed), r.metrics[mi].2, r.degradations[di].1, false));
                }
                let n = chunk.len() as f64;
                let v = chunk.iter().map(|r| r.metrics[mi].2).sum::<f64>() / n;
                let d = chunk.iter().map(|r| r.degradations[di].1).sum::<f64>() / n;
                averaged.push(row(None, v, d, true));
            }
        }
    }
    // raw rows ordered by setting, seed, metric, rate
    let per_setting = rows.len() / settings.len().max(1);
    let mut ordered = Vec::with_capacity(rows.len() + averaged.len());
    for si in 0..settings.len() {
        let block = &rows[si * per_setting..(si + 1) * per_setting];
        for k in 0..seeds.len() {
            ordered.extend(block.iter().skip(k).step_by(seeds.len()).cloned());
        }
    }
    ordered.extend(averaged);
    ordered
}

fn run_grid(
    experiment: &str,
    cfg: &ExperimentConfig,
    kind: SyntheticKind,
    settings: Vec<Setting>,
) -> Result<ExperimentOutput, HarnessError> {
    let dataset = Dataset::from_config(cfg, kind)?;
    let prepared = prepare(cfg, &dataset)?;
    let est = cfg.estimator_settings();
    let window = cfg.window()?;
    let seeds = cfg.seed_list();
    let period = cfg.knob_period_frames();
    let tuples: Vec<(usize, u64)> = (0..settings.len()).flat_map(|i| seeds.iter().map(move |s| (i, *s))).collect();
    let results = tuples
        .par_iter()
        .map(|&(i, seed)| {
            let s = &settings[i];
            let wrap = |e: HarnessError| HarnessError::Tuple {
                experiment: experiment.to_string(),
                tuple: format!("sigma_init={} lambda={} seed={seed}", s.sigma, s.lambda),
                source: Box::new(e),
            };
            let spec = cfg.model_spec(s.sigma);
            let bundle = init_weights(&spec, seed).map_err(|e| wrap(e.into()))?;
            let mut model = SeparationModel::from_bundle(&spec, &bundle).map_err(|e| wrap(e.into()))?;
            if s.lambda != 0.0 {
                model = model.with_perturbation(s.lambda, period);
            }
            log::info!("{experiment}: sigma_init={} lambda={} seed={seed}", s.sigma, s.lambda);
            run_tuple(&model, &prepared, &est, window, cfg.metrics_at_test_rates).map_err(wrap)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let rows = assemble(experiment, &model_id(cfg), &settings, &seeds, results);
    let with_lambda = experiment == "knob";
    Ok(ExperimentOutput {
        experiment: experiment.to_string(),
        correlations: correlations(&rows, with_lambda),
        rows,
        skipped: prepared.trained.skipped,
        dataset: dataset.metadata(),
    })
}

/// Every σ of the grid × every seed, on the configured dataset.
pub fn run_sigma_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let settings = cfg.sigma_grid().into_iter().map(|sigma| Setting { sigma, lambda: 0.0 }).collect();
    run_grid("sweep", cfg, cfg.synthetic, settings)
}

/// The knob model (σ = `knob_sigma_pi`·π) with mask perturbation strength
/// λ over `lambdas`, on complementary AM scenes unless a dataset directory
/// is configured.
pub fn run_perturbation_knob(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    if lambdas.is_empty() {
        return Err(HarnessError::Config("lambda grid is empty".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(HarnessError::Config(format!("lambda must be non-negative, got {l}")));
    }
    let sigma = cfg.knob_sigma_pi * std::f64::consts::PI;
    let settings = lambdas.iter().map(|&lambda| Setting { sigma, lambda }).collect();
    run_grid("knob", cfg, SyntheticKind::ComplementaryAm, settings)
}

/// Load a `.sfw` file and pair it with the config's model spec. The σ used
/// to build the spec is the one (from the sweep grid or the knob) whose spec
/// hash the file records.
pub fn load_model(cfg: &ExperimentConfig, weights: impl AsRef<Path>) -> Result<SeparationModel, HarnessError> {
    let bundle = load_weights(weights)?;
    model_for_bundle(cfg, &bundle)
}

pub fn model_for_bundle(cfg: &ExperimentConfig, bundle: &WeightBundle) -> Result<SeparationModel, HarnessError> {
    let candidates = cfg
        .sigma_grid()
        .into_iter()
        .chain(std::iter::once(cfg.knob_sigma_pi * std::f64::consts::PI));
    for sigma in candidates {
        let spec = cfg.model_spec(sigma);
        if spec.hash() == bundle.meta.spec_hash {
            return Ok(SeparationModel::from_bundle(&spec, bundle)?);
        }
    }
    Err(WeightError::SpecMismatch {
        expected: cfg.model_spec(cfg.sigma_grid()[0]).hash(),
        found: bundle.meta.spec_hash,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            test_rates: vec![8000.0, 16000.0],
            sigma_init_pi: vec![200.0, 800.0],
            seeds: 2,
            segment_seconds: 0.1,
            scene_seconds: 0.1,
            scenes: 2,
            channels: 8,
            hidden: 8,
            blocks: 1,
            dilations: vec![1],
            ..Default::default()
        }
    }

    #[test]
    fn row_counts_follow_the_grid() {
        let cfg = small();
        let out = run_sigma_sweep(&cfg).unwrap();
        // 2 σ × 2 seeds × 2 rates × 4 metrics
        assert_eq!(out.raw_rows().count(), 32);
        assert_eq!(out.averaged_rows().count(), 16);
        assert_eq!(out.correlations.len(), 8);
        let first: Vec<_> = out.rows.iter().take(8).map(|r| (r.seed, r.metric.as_str(), r.test_rate)).collect();
        assert_eq!(first[0], (Some(0), "LN-LEE", 8000.0));
        assert_eq!(first[1], (Some(0), "LN-LEE", 16000.0));
        assert_eq!(first[2], (Some(0), "LLN-LEE", 8000.0));
        // the averaged row is the seed mean
        let raw: Vec<_> = out
            .raw_rows()
            .filter(|r| r.sigma_init == out.rows[0].sigma_init && r.metric == "LN-LEE" && r.test_rate == 16000.0)
            .collect();
        assert_eq!(raw.len(), 2);
        let avg = out
            .averaged_rows()
            .find(|r| r.sigma_init == out.rows[0].sigma_init && r.metric == "LN-LEE" && r.test_rate == 16000.0)
            .unwrap();
        assert_eq!(avg.value, (raw[0].value + raw[1].value) / 2.0);
    }

    #[test]
    fn degradation_at_trained_rate_is_zero() {
        let cfg = ExperimentConfig {
            test_rates: vec![32000.0],
            sigma_init_pi: vec![200.0],
            seeds: 1,
            ..small()
        };
        let out = run_sigma_sweep(&cfg).unwrap();
        assert_eq!(out.raw_rows().count(), 4);
        assert!(out.rows.iter().all(|r| r.degradation == 0.0));
    }

    #[test]
    fn knob_at_zero_matches_unperturbed_model() {
        let mut cfg = small();
        cfg.seeds = 1;
        cfg.sigma_init_pi = vec![cfg.knob_sigma_pi];
        let sweep = run_sigma_sweep(&cfg).unwrap();
        let knob = run_perturbation_knob(&cfg, &[0.0]).unwrap();
        // same model; only the scene recipe differs, so compare on the same data
        cfg.synthetic = SyntheticKind::ComplementaryAm;
        let sweep_am = run_sigma_sweep(&cfg).unwrap();
        let vals = |o: &ExperimentOutput| o.raw_rows().map(|r| (r.value, r.degradation)).collect::<Vec<_>>();
        assert_eq!(vals(&knob), vals(&sweep_am));
        assert_ne!(vals(&knob), vals(&sweep));
    }

    #[test]
    fn failures_name_the_tuple() {
        let mut cfg = small();
        cfg.seeds = 1;
        cfg.sigma_init_pi = vec![200.0];
        cfg.segment_seconds = 0.0005; // 16 samples: shorter than the kernel
        let err = run_sigma_sweep(&cfg).unwrap_err();
        assert!(err.to_string().contains("sigma_init="), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn weights_are_matched_to_their_sigma() {
        let cfg = small();
        let spec = cfg.model_spec(cfg.sigma_grid()[1]);
        let bundle = init_weights(&spec, 5).unwrap();
        let m = model_for_bundle(&cfg, &bundle).unwrap();
        assert_eq!(m.spec, spec);
        let other = ExperimentConfig { channels: 4, ..small() };
        assert_eq!(model_for_bundle(&other, &bundle).unwrap_err().exit_code(), 2);
    }
}
