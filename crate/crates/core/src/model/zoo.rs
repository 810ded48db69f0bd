//! Small ready-made models used by tests, examples and the harness.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    init_weights, EncoderSpec, FilterSource, LinearLatentMap, MaskPredictorSpec, MaskStage, ModelError, ModelSpec,
    Nonlinearity, SeparationModel,
};

/// `C = 16, K = 32, H = 16`, two-block TCN, two sources.
pub fn tiny_spec(filter_source: FilterSource, trained_rate: f64, sigma_init: f64) -> ModelSpec {
    ModelSpec {
        encoder: EncoderSpec {
            channels: 16,
            kernel_length: 32,
            hop: 16,
            nonlinearity: Nonlinearity::Relu,
            filter_source,
        },
        mask: MaskPredictorSpec {
            blocks: 2,
            hidden: 16,
            dilations: vec![1, 2],
            sources: 2,
        },
        trained_rate,
        sigma_init,
    }
}

pub fn tiny_learned(seed: u64, trained_rate: f64) -> Result<SeparationModel, ModelError> {
    let spec = tiny_spec(FilterSource::Learned, trained_rate, 1.0);
    SeparationModel::from_bundle(&spec, &init_weights(&spec, seed)?)
}

pub fn tiny_sfi(seed: u64, trained_rate: f64, sigma_init: f64) -> Result<SeparationModel, ModelError> {
    let spec = tiny_spec(FilterSource::Mgf, trained_rate, sigma_init);
    SeparationModel::from_bundle(&spec, &init_weights(&spec, seed)?)
}

/// Tiny SFI model whose masks are identically one.
pub fn all_ones(seed: u64, trained_rate: f64, sigma_init: f64) -> Result<SeparationModel, ModelError> {
    let mut m = tiny_sfi(seed, trained_rate, sigma_init)?;
    m.force_all_ones_mask();
    Ok(m)
}

/// Bias-free model with no encoder nonlinearity and a dense linear latent
/// map per source, for inputs of exactly `samples` samples.
pub fn all_linear(seed: u64, trained_rate: f64, samples: usize) -> Result<SeparationModel, ModelError> {
    let spec = ModelSpec {
        encoder: EncoderSpec {
            channels: 4,
            kernel_length: 8,
            hop: 4,
            nonlinearity: Nonlinearity::None,
            filter_source: FilterSource::Learned,
        },
        mask: MaskPredictorSpec {
            blocks: 1,
            hidden: 4,
            dilations: vec![1],
            sources: 2,
        },
        trained_rate,
        sigma_init: 1.0,
    };
    let frames = spec
        .frames_for(samples)
        .ok_or(ModelError::InputTooShort { len: samples, kernel: 8 })?;
    let mut m = SeparationModel::from_bundle(&spec, &init_weights(&spec, seed)?)?;
    let n = spec.encoder.channels * frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c69_6e65_6172);
    let bound = 1.0 / (n as f64).sqrt();
    let maps = (0..spec.mask.sources)
        .map(|_| Array2::from_shape_simple_fn((n, n), || rng.random_range(-bound..bound)))
        .collect();
    m.mask = MaskStage::Linear(LinearLatentMap {
        channels: spec.encoder.channels,
        frames,
        maps,
    });
    Ok(m)
}

/// Orthonormal DCT-II analysis rows, `channels × channels`.
pub fn dct_basis(channels: usize) -> Array2<f64> {
    let n = channels as f64;
    Array2::from_shape_fn((channels, channels), |(c, k)| {
        let scale = if c == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * (k as f64 + 0.5) * c as f64 / n).cos()
    })
}

/// Non-overlapping (`K = H = C`) orthonormal DCT encoder with its
/// transpose as decoder and all-ones masks: a perfect-reconstruction pair.
pub fn orthogonal_dct_pair(channels: usize, trained_rate: f64) -> Result<SeparationModel, ModelError> {
    let spec = ModelSpec {
        encoder: EncoderSpec {
            channels,
            kernel_length: channels,
            hop: channels,
            nonlinearity: Nonlinearity::None,
            filter_source: FilterSource::Learned,
        },
        mask: MaskPredictorSpec {
            blocks: 1,
            hidden: 4,
            dilations: vec![1],
            sources: 1,
        },
        trained_rate,
        sigma_init: 1.0,
    };
    let mut m = SeparationModel::from_bundle(&spec, &init_weights(&spec, 0)?)?;
    let basis = dct_basis(channels);
    m.encoder.weights = basis.clone();
    m.decoder.weights = basis;
    m.force_all_ones_mask();
    Ok(m)
}
