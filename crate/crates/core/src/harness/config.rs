//! Experiment configuration: one flat TOML table.
//!
//! Every key is optional and unknown keys are rejected. Bandwidths are given
//! in multiples of π rad/s, so `sigma_init_pi = [10, 20]` means `10π, 20π`.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `trained_rate` | 32000 | rate the model operates at, Hz |
//! | `test_rates` | [8000, 16000] | evaluation rates, Hz |
//! | `sigma_init_pi` | [10, 20, ..., 100] | σ-sweep grid |
//! | `seeds` | 4 | seeds `seed_offset .. seed_offset + seeds` |
//! | `seed_offset` | 0 | first seed |
//! | `segment_seconds` | 5 | leading segment taken from each track |
//! | `window_support` | 24 | resampler window `L`, samples |
//! | `estimator` | "linearized" | or "central-fd" |
//! | `r_step`, `richardson`, `jvp_eps` | 1e-3, true, 1e-4 | estimator settings |
//! | `dataset_dir` | unset | directory of tracks; synthetic scenes when unset |
//! | `synthetic` | "two-source" | or "complementary-am" |
//! | `scenes`, `scene_seconds`, `dataset_seed` | 8, 5, 0 | synthetic scenes |
//! | `am_period`, `am_depth` | 0.004, 0.8 | envelope of the AM scenes, s |
//! | `output_dir` | "out" | where reports go |
//! | `channels`, `kernel_length`, `hop` | 16, 32, 16 | encoder shape |
//! | `nonlinearity`, `filter_source` | "relu", "mgf" | encoder type |
//! | `blocks`, `hidden`, `dilations`, `sources` | 2, 16, [1, 2], 2 | mask predictor |
//! | `knob_sigma_pi` | 800 | σ of the perturbation-knob model |
//! | `knob_lambdas` | [0, 0.1, ..., 0.5] | perturbation strengths |
//! | `knob_period` | unset | perturbation period, s; defaults to `am_period` |
//! | `metrics_at_test_rates` | false | also compute metrics at each test rate |

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lie::{Estimator, EstimatorSettings};
use crate::model::{EncoderSpec, FilterSource, MaskPredictorSpec, ModelSpec, Nonlinearity};
use crate::resample::WindowSpec;

use super::synth::SyntheticSceneSpec;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    TwoSource,
    ComplementaryAm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trained_rate: f64,
    pub test_rates: Vec<f64>,
    pub sigma_init_pi: Vec<f64>,
    pub seeds: u64,
    pub seed_offset: u64,
    pub segment_seconds: f64,
    pub window_support: usize,
    pub estimator: Estimator,
    pub r_step: f64,
    pub richardson: bool,
    pub jvp_eps: f64,
    pub dataset_dir: Option<PathBuf>,
    pub synthetic: SyntheticKind,
    pub scenes: usize,
    pub scene_seconds: f64,
    pub dataset_seed: u64,
    pub am_period: f64,
    pub am_depth: f64,
    pub output_dir: PathBuf,
    pub channels: usize,
    pub kernel_length: usize,
    pub hop: usize,
    pub nonlinearity: Nonlinearity,
    pub filter_source: FilterSource,
    pub blocks: usize,
    pub hidden: usize,
    pub dilations: Vec<usize>,
    pub sources: usize,
    pub knob_sigma_pi: f64,
    pub knob_lambdas: Vec<f64>,
    pub knob_period: Option<f64>,
    pub metrics_at_test_rates: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trained_rate: 32000.0,
            test_rates: vec![8000.0, 16000.0],
            sigma_init_pi: (1..=10).map(|k| 10.0 * k as f64).collect(),
            seeds: 4,
            seed_offset: 0,
            segment_seconds: 5.0,
            window_support: 24,
            estimator: Estimator::Linearized,
            r_step: 1e-3,
            richardson: true,
            jvp_eps: 1e-4,
            dataset_dir: None,
            synthetic: SyntheticKind::TwoSource,
            scenes: 8,
            scene_seconds: 5.0,
            dataset_seed: 0,
            am_period: 0.004,
            am_depth: 0.8,
            output_dir: PathBuf::from("out"),
            channels: 16,
            kernel_length: 32,
            hop: 16,
            nonlinearity: Nonlinearity::Relu,
            filter_source: FilterSource::Mgf,
            blocks: 2,
            hidden: 16,
            dilations: vec![1, 2],
            sources: 2,
            knob_sigma_pi: 800.0,
            knob_lambdas: (0..=5).map(|k| k as f64 / 10.0).collect(),
            knob_period: None,
            metrics_at_test_rates: false,
        }
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative `dataset_dir` and `output_dir` are resolved against the
    /// directory holding the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.dataset_dir {
            cfg.dataset_dir = Some(base.join(d));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.trained_rate) {
            return Err(bad(format!("trained_rate must be positive, got {}", self.trained_rate)));
        }
        if self.test_rates.is_empty() {
            return Err(bad("test_rates is empty"));
        }
        if let Some(r) = self.test_rates.iter().find(|r| !positive(**r)) {
            return Err(bad(format!("test rate must be positive, got {r}")));
        }
        if self.sigma_init_pi.is_empty() {
            return Err(bad("sigma_init_pi is empty"));
        }
        if let Some(s) = self.sigma_init_pi.iter().find(|s| !positive(**s)) {
            return Err(bad(format!("sigma_init_pi entries must be positive, got {s}")));
        }
        if self.seeds == 0 {
            return Err(bad("seeds must be at least 1"));
        }
        if !positive(self.segment_seconds) {
            return Err(bad("segment_seconds must be positive"));
        }
        self.window().map_err(|e| bad(e.to_string()))?;
        if !positive(self.r_step) || !positive(self.jvp_eps) {
            return Err(bad("r_step and jvp_eps must be positive"));
        }
        if self.dataset_dir.is_none() {
            if self.scenes == 0 {
                return Err(bad("scenes must be at least 1"));
            }
            if !positive(self.scene_seconds) {
                return Err(bad("scene_seconds must be positive"));
            }
        }
        if !positive(self.am_period) || !(0.0..=1.0).contains(&self.am_depth) {
            return Err(bad("am_period must be positive and am_depth in [0, 1]"));
        }
        if !positive(self.knob_sigma_pi) {
            return Err(bad("knob_sigma_pi must be positive"));
        }
        if let Some(l) = self.knob_lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(bad(format!("knob lambdas must be non-negative, got {l}")));
        }
        if let Some(p) = self.knob_period {
            if !positive(p) {
                return Err(bad("knob_period must be positive"));
            }
        }
        self.model_spec(PI).validate().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn window(&self) -> Result<WindowSpec, crate::resample::ResampleError> {
        WindowSpec::hann(self.window_support)
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            estimator: self.estimator,
            r_step: self.r_step,
            richardson: self.richardson,
            jvp_eps: self.jvp_eps,
            window: WindowSpec::hann(self.window_support).unwrap_or_default(),
        }
    }

    /// Model spec with `sigma_init` in rad/s.
    pub fn model_spec(&self, sigma_init: f64) -> ModelSpec {
        ModelSpec {
            encoder: EncoderSpec {
                channels: self.channels,
                kernel_length: self.kernel_length,
                hop: self.hop,
                nonlinearity: self.nonlinearity,
                filter_source: self.filter_source,
            },
            mask: MaskPredictorSpec {
                blocks: self.blocks,
                hidden: self.hidden,
                dilations: self.dilations.clone(),
                sources: self.sources,
            },
            trained_rate: self.trained_rate,
            sigma_init,
        }
    }

    pub fn sigma_grid(&self) -> Vec<f64> {
        self.sigma_init_pi.iter().map(|s| s * PI).collect()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (self.seed_offset..self.seed_offset + self.seeds).collect()
    }

    pub fn knob_period(&self) -> f64 {
        self.knob_period.unwrap_or(self.am_period)
    }

    /// Perturbation period in latent frames at the trained rate.
    pub fn knob_period_frames(&self) -> f64 {
        self.knob_period() * self.trained_rate / self.hop as f64
    }

    /// Scenes are band-limited for the lowest rate they will be rendered at.
    pub fn scene_spec(&self, kind: SyntheticKind) -> SyntheticSceneSpec {
        let lowest = self.test_rates.iter().copied().fold(self.trained_rate, f64::min);
        let mut spec = match kind {
            SyntheticKind::TwoSource => {
                SyntheticSceneSpec::two_source(self.scene_seconds, self.trained_rate, self.dataset_seed)
            }
            SyntheticKind::ComplementaryAm => SyntheticSceneSpec::complementary_am(
                self.scene_seconds,
                self.trained_rate,
                self.dataset_seed,
                self.knob_period(),
                self.am_depth,
            ),
        };
        spec.bandlimit = 0.4 * lowest;
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let grid = cfg.sigma_grid();
        assert_eq!(grid.len(), 10);
        assert!((grid[0] - 10.0 * PI).abs() < 1e-12 && (grid[9] - 100.0 * PI).abs() < 1e-12);
        assert_eq!(cfg.seed_list(), vec![0, 1, 2, 3]);
        assert_eq!(cfg.knob_period_frames(), 8.0);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml("sigma_grid = [1.0]").unwrap_err();
        assert!(err.to_string().contains("sigma_grid"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invariants_are_checked() {
        for text in [
            "seeds = 0",
            "sigma_init_pi = []",
            "test_rates = [-8000.0]",
            "trained_rate = 0.0",
            "window_support = 7",
            "knob_lambdas = [-0.1]",
            "estimator = \"spline\"",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn keys_parse() {
        let cfg = ExperimentConfig::from_toml(
            "test_rates = [16000.0]\nseeds = 1\nestimator = \"central-fd\"\nsynthetic = \"complementary-am\"\nknob_period = 0.0025\nnonlinearity = \"none\"",
        )
        .unwrap();
        assert_eq!(cfg.estimator, Estimator::CentralFd);
        assert_eq!(cfg.synthetic, SyntheticKind::ComplementaryAm);
        assert_eq!(cfg.knob_period_frames(), 5.0);
        assert_eq!(cfg.scene_spec(cfg.synthetic).bandlimit, 6400.0);
    }
}
