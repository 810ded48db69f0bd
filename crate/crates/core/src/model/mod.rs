//! Forward-only encoder / mask predictor / decoder separation models.
//!
//! Every model exposes the three-way split `f_dec ∘ f_mask ∘ f_enc` on raw
//! arrays (used by the Lie-derivative probes) and on typed [`Signal`] /
//! [`Latent`] values. Encoders and decoders are either learned
//! time-domain filterbanks or sampling-frequency-independent banks whose
//! kernels are designed from modulated Gaussian filters at the operating
//! rate.

pub mod conv;
pub mod mgf;
pub mod tcn;
pub mod weights;
pub mod zoo;

use std::f64::consts::PI;

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::resample::{ResampleError, Signal};
use conv::{strided_conv, transposed_conv};
use mgf::{design_filter, init_mgf_bank, MgfParams};
use tcn::{Tcn, TcnBlock};
pub use weights::{load_weights, save_weights, Tensor, WeightBundle, WeightError, WeightMeta};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {len} samples but the encoder kernel needs at least {kernel}")]
    InputTooShort { len: usize, kernel: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("model with learned filters cannot be redesigned for {0} Hz")]
    NotSfi(f64),
    #[error("unsupported sampling rate {0} Hz")]
    UnsupportedRate(f64),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Signal(#[from] ResampleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterSource {
    /// Free time-domain kernels, tied to the trained rate.
    Learned,
    /// Kernels designed per rate from modulated Gaussian filters.
    Mgf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub channels: usize,
    pub kernel_length: usize,
    pub hop: usize,
    pub nonlinearity: Nonlinearity,
    pub filter_source: FilterSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPredictorSpec {
    pub blocks: usize,
    pub hidden: usize,
    pub dilations: Vec<usize>,
    pub sources: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub mask: MaskPredictorSpec,
    pub trained_rate: f64,
    /// Initial MGF bandwidth in rad/s (ignored for learned filterbanks).
    pub sigma_init: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec {
                channels: 32,
                kernel_length: 32,
                hop: 16,
                nonlinearity: Nonlinearity::Relu,
                filter_source: FilterSource::Mgf,
            },
            mask: MaskPredictorSpec {
                blocks: 4,
                hidden: 32,
                dilations: vec![1, 2, 4, 8],
                sources: 2,
            },
            trained_rate: 32000.0,
            sigma_init: 10.0 * PI,
        }
    }
}

const TCN_TAPS: usize = 3;

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let e = &self.encoder;
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        if e.channels == 0 {
            return bad("encoder needs at least one channel");
        }
        if e.hop == 0 || e.hop > e.kernel_length {
            return bad("encoder hop must satisfy 1 <= hop <= kernel_length");
        }
        let m = &self.mask;
        if m.blocks == 0 || m.sources == 0 || m.hidden == 0 {
            return bad("mask predictor needs blocks, hidden channels and sources >= 1");
        }
        if m.dilations.len() != m.blocks || m.dilations.iter().any(|d| *d == 0) {
            return bad("mask predictor needs one positive dilation per block");
        }
        if !(self.trained_rate.is_finite() && self.trained_rate > 0.0) {
            return bad("trained rate must be positive");
        }
        if e.filter_source == FilterSource::Mgf && !(self.sigma_init > 0.0) {
            return bad("sigma_init must be positive");
        }
        Ok(())
    }

    /// Stable 64-bit digest of the spec.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Every tensor a weight bundle for this spec must carry.
    pub fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.encoder.channels;
        let k = self.encoder.kernel_length;
        let hd = self.mask.hidden;
        let mut v = Vec::new();
        for side in ["encoder", "decoder"] {
            match self.encoder.filter_source {
                FilterSource::Learned => v.push((format!("{side}.weight"), vec![c, k])),
                FilterSource::Mgf => {
                    for p in ["mu", "sigma", "phi"] {
                        v.push((format!("{side}.mgf.{p}"), vec![c]));
                    }
                }
            }
        }
        v.push(("encoder.bias".into(), vec![c]));
        v.push(("decoder.bias".into(), vec![1]));
        v.push(("mask.norm.gain".into(), vec![c]));
        v.push(("mask.norm.bias".into(), vec![c]));
        v.push(("mask.bottleneck.weight".into(), vec![hd, c]));
        v.push(("mask.bottleneck.bias".into(), vec![hd]));
        for i in 0..self.mask.blocks {
            v.push((format!("mask.block{i}.conv.weight"), vec![hd, hd, TCN_TAPS]));
            v.push((format!("mask.block{i}.conv.bias"), vec![hd]));
            v.push((format!("mask.block{i}.prelu"), vec![1]));
            v.push((format!("mask.block{i}.norm.gain"), vec![hd]));
            v.push((format!("mask.block{i}.norm.bias"), vec![hd]));
        }
        v.push(("mask.readout.weight".into(), vec![self.mask.sources * c, hd]));
        v.push(("mask.readout.bias".into(), vec![self.mask.sources * c]));
        v
    }

    pub fn frames_for(&self, samples: usize) -> Option<usize> {
        let k = self.encoder.kernel_length;
        (samples >= k).then(|| (samples - k) / self.encoder.hop + 1)
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f32> {
    (0..n)
        .map(|_| rng.random_range(-bound..bound) as f32)
        .collect()
}

/// Deterministic initialization for `(spec, seed)`.
///
/// MGF banks start on a mel grid over `(0, π F_s]` with phases alternating
/// `0, π/2` and a common `σ = sigma_init`; everything else is drawn
/// uniformly in `±1/sqrt(fan_in)` from a ChaCha8 stream.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Result<WeightBundle, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.encoder.channels;
    let k = spec.encoder.kernel_length;
    let hd = spec.mask.hidden;
    let src = spec.mask.sources;
    let mut b = WeightBundle::new(WeightMeta {
        seed,
        spec_hash: spec.hash(),
        trained_rate: spec.trained_rate,
    });
    for side in ["encoder", "decoder"] {
        match spec.encoder.filter_source {
            FilterSource::Learned => {
                let bound = 1.0 / (k as f64).sqrt();
                b.insert(format!("{side}.weight"), Tensor::new(vec![c, k], uniform(&mut rng, c * k, bound)));
            }
            FilterSource::Mgf => {
                let bank = init_mgf_bank(c, spec.trained_rate, spec.sigma_init);
                let col = |f: fn(&MgfParams) -> f64| bank.iter().map(|p| f(p) as f32).collect();
                b.insert(format!("{side}.mgf.mu"), Tensor::new(vec![c], col(|p| p.mu)));
                b.insert(format!("{side}.mgf.sigma"), Tensor::new(vec![c], col(|p| p.sigma)));
                b.insert(format!("{side}.mgf.phi"), Tensor::new(vec![c], col(|p| p.phi)));
            }
        }
    }
    b.insert("encoder.bias", Tensor::new(vec![c], vec![0.0; c]));
    b.insert("decoder.bias", Tensor::new(vec![1], vec![0.0]));
    b.insert("mask.norm.gain", Tensor::new(vec![c], vec![1.0; c]));
    b.insert("mask.norm.bias", Tensor::new(vec![c], vec![0.0; c]));
    let bound = 1.0 / (c as f64).sqrt();
    b.insert("mask.bottleneck.weight", Tensor::new(vec![hd, c], uniform(&mut rng, hd * c, bound)));
    b.insert("mask.bottleneck.bias", Tensor::new(vec![hd], uniform(&mut rng, hd, bound)));
    let bound = 1.0 / ((hd * TCN_TAPS) as f64).sqrt();
    for i in 0..spec.mask.blocks {
        b.insert(
            format!("mask.block{i}.conv.weight"),
            Tensor::new(vec![hd, hd, TCN_TAPS], uniform(&mut rng, hd * hd * TCN_TAPS, bound)),
        );
        b.insert(format!("mask.block{i}.conv.bias"), Tensor::new(vec![hd], uniform(&mut rng, hd, bound)));
        b.insert(format!("mask.block{i}.prelu"), Tensor::new(vec![1], vec![0.25]));
        b.insert(format!("mask.block{i}.norm.gain"), Tensor::new(vec![hd], vec![1.0; hd]));
        b.insert(format!("mask.block{i}.norm.bias"), Tensor::new(vec![hd], vec![0.0; hd]));
    }
    let bound = 1.0 / (hd as f64).sqrt();
    b.insert(
        "mask.readout.weight",
        Tensor::new(vec![src * c, hd], uniform(&mut rng, src * c * hd, bound)),
    );
    b.insert("mask.readout.bias", Tensor::new(vec![src * c], vec![0.0; src * c]));
    Ok(b)
}

/// Pseudo time-frequency representation: `channels × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub values: Array2<f64>,
    pub frame_rate: f64,
}

impl Latent {
    pub fn channels(&self) -> usize {
        self.values.nrows()
    }
    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Filterbank for either side of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    pub weights: Array2<f64>,
    pub mgf: Option<Vec<MgfParams>>,
    /// Output scale folded into `weights`; reapplied on redesign.
    pub gain: f64,
}

impl Filterbank {
    pub fn learned(weights: Array2<f64>) -> Self {
        Self {
            weights,
            mgf: None,
            gain: 1.0,
        }
    }

    pub fn designed(bank: Vec<MgfParams>, rate: f64, kernel: usize) -> Self {
        let mut fb = Self {
            weights: Array2::zeros((bank.len(), kernel)),
            mgf: Some(bank),
            gain: 1.0,
        };
        fb.redesign(rate);
        fb
    }

    fn redesign(&mut self, rate: f64) {
        if let Some(bank) = &self.mgf {
            let k = self.weights.ncols();
            for (c, p) in bank.iter().enumerate() {
                let h = design_filter(p, rate, k);
                for (dst, v) in self.weights.row_mut(c).iter_mut().zip(h) {
                    *dst = self.gain * v;
                }
            }
        }
    }

    fn scale(&mut self, a: f64) {
        self.gain *= a;
        self.weights.mapv_inplace(|w| w * a);
    }
}

/// Fixed dense maps on the flattened latent (`c·T + t`), one per source.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLatentMap {
    pub channels: usize,
    pub frames: usize,
    pub maps: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskStage {
    /// Sigmoid masks from a dilated TCN, multiplied into the latent.
    Tcn(Tcn),
    /// A linear stand-in for the mask predictor (oracle tests).
    Linear(LinearLatentMap),
}

/// Frame-position dependent gain `1 + λ sin(2π t / T₀ + 2π s / S)` applied
/// to the masked latent of source `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub lambda: f64,
    pub period_frames: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationModel {
    pub spec: ModelSpec,
    rate: f64,
    pub encoder: Filterbank,
    pub encoder_bias: Vec<f64>,
    pub mask: MaskStage,
    pub decoder: Filterbank,
    pub decoder_bias: f64,
    pub perturbation: Option<Perturbation>,
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.to_f64()
}

fn mat(t: &Tensor) -> Array2<f64> {
    Array2::from_shape_vec((t.shape[0], t.shape[1]), t.to_f64()).expect("validated shape")
}

impl SeparationModel {
    /// Assemble a model at the trained rate from a validated bundle.
    pub fn from_bundle(spec: &ModelSpec, bundle: &WeightBundle) -> Result<Self, ModelError> {
        spec.validate()?;
        if bundle.meta.spec_hash != spec.hash() {
            return Err(WeightError::SpecMismatch {
                expected: spec.hash(),
                found: bundle.meta.spec_hash,
            }
            .into());
        }
        bundle.validate(&spec.expected_shapes())?;
        let c = spec.encoder.channels;
        let k = spec.encoder.kernel_length;
        let hd = spec.mask.hidden;
        let rate = spec.trained_rate;
        let bank = |side: &str| -> Result<Filterbank, WeightError> {
            Ok(match spec.encoder.filter_source {
                FilterSource::Learned => Filterbank::learned(mat(bundle.get(&format!("{side}.weight"))?)),
                FilterSource::Mgf => {
                    let mu = f64s(bundle.get(&format!("{side}.mgf.mu"))?);
                    let sigma = f64s(bundle.get(&format!("{side}.mgf.sigma"))?);
                    let phi = f64s(bundle.get(&format!("{side}.mgf.phi"))?);
                    let params = (0..c)
                        .map(|i| MgfParams {
                            mu: mu[i],
                            sigma: sigma[i],
                            phi: phi[i],
                        })
                        .collect();
                    Filterbank::designed(params, rate, k)
                }
            })
        };
        let encoder = bank("encoder")?;
        let decoder = bank("decoder")?;
        let mut blocks = Vec::with_capacity(spec.mask.blocks);
        for (i, &dilation) in spec.mask.dilations.iter().enumerate() {
            let w = bundle.get(&format!("mask.block{i}.conv.weight"))?;
            blocks.push(TcnBlock {
                conv_weight: Array3::from_shape_vec((hd, hd, TCN_TAPS), w.to_f64()).expect("validated"),
                conv_bias: f64s(bundle.get(&format!("mask.block{i}.conv.bias"))?),
                dilation,
                prelu: bundle.get(&format!("mask.block{i}.prelu"))?.data[0] as f64,
                norm_gain: f64s(bundle.get(&format!("mask.block{i}.norm.gain"))?),
                norm_bias: f64s(bundle.get(&format!("mask.block{i}.norm.bias"))?),
            });
        }
        let tcn = Tcn {
            channels: c,
            sources: spec.mask.sources,
            norm_gain: f64s(bundle.get("mask.norm.gain")?),
            norm_bias: f64s(bundle.get("mask.norm.bias")?),
            bottleneck_weight: mat(bundle.get("mask.bottleneck.weight")?),
            bottleneck_bias: f64s(bundle.get("mask.bottleneck.bias")?),
            blocks,
            readout_weight: mat(bundle.get("mask.readout.weight")?),
            readout_bias: f64s(bundle.get("mask.readout.bias")?),
        };
        Ok(Self {
            spec: spec.clone(),
            rate,
            encoder,
            encoder_bias: f64s(bundle.get("encoder.bias")?),
            mask: MaskStage::Tcn(tcn),
            decoder,
            decoder_bias: bundle.get("decoder.bias")?.data[0] as f64,
            perturbation: None,
        })
    }

    /// Build directly from parts (used for constructed oracle models).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: ModelSpec,
        rate: f64,
        encoder: Filterbank,
        encoder_bias: Vec<f64>,
        mask: MaskStage,
        decoder: Filterbank,
        decoder_bias: f64,
    ) -> Result<Self, ModelError> {
        spec.validate()?;
        let c = spec.encoder.channels;
        let k = spec.encoder.kernel_length;
        for fb in [&encoder, &decoder] {
            if fb.weights.dim() != (c, k) {
                return Err(ModelError::ShapeMismatch {
                    expected: (c, k),
                    actual: fb.weights.dim(),
                });
            }
        }
        Ok(Self {
            spec,
            rate,
            encoder,
            encoder_bias,
            mask,
            decoder,
            decoder_bias,
            perturbation: None,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.rate
    }

    pub fn frame_rate(&self) -> f64 {
        self.rate / self.spec.encoder.hop as f64
    }

    pub fn sources(&self) -> usize {
        match &self.mask {
            MaskStage::Tcn(t) => t.sources,
            MaskStage::Linear(l) => l.maps.len(),
        }
    }

    pub fn channels(&self) -> usize {
        self.spec.encoder.channels
    }

    pub fn is_sfi(&self) -> bool {
        self.encoder.mgf.is_some() && self.decoder.mgf.is_some()
    }

    /// Output length of the decoder for `samples` input samples.
    pub fn output_length(&self, samples: usize) -> Option<usize> {
        let h = self.spec.encoder.hop;
        self.spec
            .frames_for(samples)
            .map(|t| (t - 1) * h + self.spec.encoder.kernel_length)
    }

    /// Copy with kernels redesigned for `rate` (same kernel length and hop
    /// in samples). Learned filterbanks only support their own rate.
    pub fn at_rate(&self, rate: f64) -> Result<Self, ModelError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ModelError::UnsupportedRate(rate));
        }
        if rate == self.rate {
            return Ok(self.clone());
        }
        if !self.is_sfi() {
            return Err(ModelError::NotSfi(rate));
        }
        let mut out = self.clone();
        out.rate = rate;
        out.encoder.redesign(rate);
        out.decoder.redesign(rate);
        Ok(out)
    }

    pub fn with_perturbation(mut self, lambda: f64, period_frames: f64) -> Self {
        self.perturbation = Some(Perturbation {
            lambda,
            period_frames,
        });
        self
    }

    pub fn scale_encoder(&mut self, a: f64) {
        self.encoder.scale(a);
        self.encoder_bias.iter_mut().for_each(|b| *b *= a);
    }

    pub fn scale_decoder(&mut self, a: f64) {
        self.decoder.scale(a);
        self.decoder_bias *= a;
    }

    /// Saturate the TCN readout so every mask equals 1.
    pub fn force_all_ones_mask(&mut self) {
        if let MaskStage::Tcn(t) = &mut self.mask {
            t.force_all_ones();
        }
    }

    pub fn decoder_is_linear(&self) -> bool {
        self.decoder_bias == 0.0
    }

    pub fn encoder_is_linear(&self) -> bool {
        self.spec.encoder.nonlinearity == Nonlinearity::None && self.encoder_bias.iter().all(|b| *b == 0.0)
    }

    pub fn mask_is_linear(&self) -> bool {
        matches!(self.mask, MaskStage::Linear(_))
    }

    // ---- raw-array forward passes -------------------------------------

    /// `f_enc`: samples → `C × T`.
    pub fn encode(&self, x: &[f64]) -> Result<Array2<f64>, ModelError> {
        let k = self.spec.encoder.kernel_length;
        if x.len() < k {
            return Err(ModelError::InputTooShort { len: x.len(), kernel: k });
        }
        let mut u = strided_conv(x, &self.encoder.weights, &self.encoder_bias, self.spec.encoder.hop);
        if self.spec.encoder.nonlinearity == Nonlinearity::Relu {
            u.mapv_inplace(|v| v.max(0.0));
        }
        Ok(u)
    }

    /// `f_mask`: `C × T` → `(S·C) × T`, source `s` in rows `s·C .. (s+1)·C`.
    pub fn mask(&self, u: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let c = self.channels();
        if u.nrows() != c {
            return Err(ModelError::ShapeMismatch {
                expected: (c, u.ncols()),
                actual: u.dim(),
            });
        }
        let frames = u.ncols();
        let sources = self.sources();
        let mut out = match &self.mask {
            MaskStage::Tcn(tcn) => {
                let mut m = tcn.masks(u.view());
                for s in 0..sources {
                    let mut block = m.slice_mut(s![s * c..(s + 1) * c, ..]);
                    block *= u;
                }
                m
            }
            MaskStage::Linear(lin) => {
                if lin.frames != frames {
                    return Err(ModelError::ShapeMismatch {
                        expected: (c, lin.frames),
                        actual: u.dim(),
                    });
                }
                let flat = u.iter().copied().collect::<ndarray::Array1<f64>>();
                let mut out = Array2::zeros((sources * c, frames));
                for (s, m) in lin.maps.iter().enumerate() {
                    let y = m.dot(&flat);
                    let y = y.into_shape_with_order((c, frames)).expect("square map");
                    out.slice_mut(s![s * c..(s + 1) * c, ..]).assign(&y);
                }
                out
            }
        };
        if let Some(p) = self.perturbation {
            if p.lambda != 0.0 {
                for s in 0..sources {
                    let phase = 2.0 * PI * s as f64 / sources as f64;
                    for t in 0..frames {
                        let g = 1.0 + p.lambda * (2.0 * PI * t as f64 / p.period_frames + phase).sin();
                        out.slice_mut(s![s * c..(s + 1) * c, t]).mapv_inplace(|v| v * g);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `f_dec` applied per source: `(S'·C) × T` → `S' × N_out` for any `S'`.
    pub fn decode(&self, v: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let c = self.channels();
        if v.nrows() == 0 || v.nrows() % c != 0 || v.ncols() == 0 {
            return Err(ModelError::ShapeMismatch {
                expected: (c, v.ncols()),
                actual: v.dim(),
            });
        }
        let groups = v.nrows() / c;
        let hop = self.spec.encoder.hop;
        let len = (v.ncols() - 1) * hop + self.spec.encoder.kernel_length;
        let mut out = Array2::zeros((groups, len));
        for g in 0..groups {
            let y = transposed_conv(
                v.slice(s![g * c..(g + 1) * c, ..]),
                &self.decoder.weights,
                self.decoder_bias,
                hop,
            );
            out.row_mut(g).assign(&ndarray::Array1::from(y));
        }
        Ok(out)
    }

    /// `f_NN = f_dec ∘ f_mask ∘ f_enc`: `S × N_out`.
    pub fn forward(&self, x: &[f64]) -> Result<Array2<f64>, ModelError> {
        let u = self.encode(x)?;
        let v = self.mask(&u)?;
        self.decode(&v)
    }

    /// `f_no_mask = f_dec ∘ f_enc`: `1 × N_out`.
    pub fn forward_no_mask(&self, x: &[f64]) -> Result<Array2<f64>, ModelError> {
        let u = self.encode(x)?;
        self.decode(&u)
    }

    // ---- typed wrappers ------------------------------------------------

    pub fn encoder_forward(&self, x: &Signal) -> Result<Latent, ModelError> {
        self.check_rate(x)?;
        Ok(Latent {
            values: self.encode(x.samples())?,
            frame_rate: self.frame_rate(),
        })
    }

    pub fn mask_forward(&self, u: &Latent) -> Result<Vec<Latent>, ModelError> {
        let c = self.channels();
        let v = self.mask(&u.values)?;
        Ok((0..self.sources())
            .map(|s| Latent {
                values: v.slice(s![s * c..(s + 1) * c, ..]).to_owned(),
                frame_rate: u.frame_rate,
            })
            .collect())
    }

    pub fn decoder_forward(&self, v: &Latent) -> Result<Signal, ModelError> {
        if v.channels() != self.channels() {
            return Err(ModelError::ShapeMismatch {
                expected: (self.channels(), v.frames()),
                actual: v.values.dim(),
            });
        }
        let y = self.decode(&v.values)?;
        Ok(Signal::new(y.row(0).to_vec(), self.rate)?)
    }

    pub fn model_forward(&self, x: &Signal) -> Result<Vec<Signal>, ModelError> {
        self.check_rate(x)?;
        let y = self.forward(x.samples())?;
        y.rows()
            .into_iter()
            .map(|r| Signal::new(r.to_vec(), self.rate).map_err(ModelError::from))
            .collect()
    }

    pub fn no_mask_forward(&self, x: &Signal) -> Result<Signal, ModelError> {
        self.check_rate(x)?;
        let y = self.forward_no_mask(x.samples())?;
        Ok(Signal::new(y.row(0).to_vec(), self.rate)?)
    }

    fn check_rate(&self, x: &Signal) -> Result<(), ModelError> {
        if x.sample_rate() != self.rate {
            return Err(ModelError::UnsupportedRate(x.sample_rate()));
        }
        Ok(())
    }
}
