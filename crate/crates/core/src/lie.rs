//! Lie derivatives of maps under the resampling group action.
//!
//! Values are `Array2<f64>` whose rows are independent time series: a
//! signal is one row, a latent has one row per channel, a multi-source
//! output has one row per source. The group acts on every row with the
//! windowed-sinc resampler, with the output length pinned to the input
//! length so that `h_r` and the derivative matrix `D` describe the same
//! object.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SeparationModel};
use crate::resample::{DerivativeStencil, ResampleAction, ResampleError, WindowSpec};

#[derive(Debug, Error)]
pub enum LieError {
    #[error("step r = {r} is too large for length {len}")]
    StepTooLarge { r: f64, len: usize },
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Signal,
    Latent,
}

/// `τ(g_r)`: row-wise resampling at `rate` (sample rate or frame rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupAction {
    pub space: Space,
    pub rate: f64,
    pub window: WindowSpec,
}

impl GroupAction {
    pub fn signal(rate: f64, window: WindowSpec) -> Self {
        Self {
            space: Space::Signal,
            rate,
            window,
        }
    }

    pub fn latent(frame_rate: f64, window: WindowSpec) -> Self {
        Self {
            space: Space::Latent,
            rate: frame_rate,
            window,
        }
    }

    /// `S(r)` on every row, output length equal to input length.
    pub fn apply(&self, r: f64, v: &Array2<f64>) -> Result<Array2<f64>, LieError> {
        let n = v.ncols();
        let action = ResampleAction::with_out_length(r, self.rate, self.window, n, n)?;
        let sparse = action.sparse();
        let mut out = Array2::zeros(v.dim());
        let mut buf = vec![0.0; n];
        for (src, mut dst) in v.rows().into_iter().zip(out.rows_mut()) {
            let x = src.to_vec();
            sparse.apply_slice(&x, &mut buf);
            dst.assign(&ndarray::ArrayView1::from(&buf));
        }
        Ok(out)
    }

    /// `D v` on every row.
    pub fn derivative(&self, v: &Array2<f64>) -> Array2<f64> {
        let stencil = DerivativeStencil::new(&self.window);
        let n = v.ncols();
        let mut out = Array2::zeros(v.dim());
        let mut buf = vec![0.0; n];
        for (src, mut dst) in v.rows().into_iter().zip(out.rows_mut()) {
            let x = src.to_vec();
            stencil.apply_slice(&x, &mut buf);
            dst.assign(&ndarray::ArrayView1::from(&buf));
        }
        out
    }

    /// Dense `n × n` derivative matrix for one row.
    pub fn derivative_matrix(&self, n: usize) -> Array2<f64> {
        crate::resample::build_derivative_matrix(n, self.rate, &self.window)
    }
}

/// A map between two spaces on which the group acts.
pub trait ProbeMap: Sync {
    fn input_action(&self) -> GroupAction;
    fn output_action(&self) -> GroupAction;
    /// `f(a x + b y) = a f(x) + b f(y)`; enables the exact JVP path.
    fn is_linear(&self) -> bool;
    fn eval(&self, x: &Array2<f64>) -> Result<Array2<f64>, LieError>;
}

/// Wraps a closure as a probe.
pub struct FnProbe<F> {
    pub input: GroupAction,
    pub output: GroupAction,
    pub linear: bool,
    pub f: F,
}

impl<F> ProbeMap for FnProbe<F>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>, LieError> + Sync,
{
    fn input_action(&self) -> GroupAction {
        self.input
    }
    fn output_action(&self) -> GroupAction {
        self.output
    }
    fn is_linear(&self) -> bool {
        self.linear
    }
    fn eval(&self, x: &Array2<f64>) -> Result<Array2<f64>, LieError> {
        (self.f)(x)
    }
}

/// `y = M vec(x)` with row-major flattening on both sides.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub matrix: Array2<f64>,
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    pub input: GroupAction,
    pub output: GroupAction,
}

impl LinearProbe {
    /// Single-row probe on signals of length `matrix.ncols()`.
    pub fn signal(matrix: Array2<f64>, action: GroupAction) -> Self {
        let (m, n) = matrix.dim();
        Self {
            matrix,
            in_shape: (1, n),
            out_shape: (1, m),
            input: action,
            output: action,
        }
    }

    /// `(M D_in − D_out M) vec(x)` with dense block-diagonal derivative
    /// matrices.
    pub fn closed_form(&self, x: &Array2<f64>) -> Array2<f64> {
        let din = block_diag(&self.input.derivative_matrix(self.in_shape.1), self.in_shape.0);
        let dout = block_diag(&self.output.derivative_matrix(self.out_shape.1), self.out_shape.0);
        let xv = ndarray::Array1::from_iter(x.iter().copied());
        let y = self.matrix.dot(&din.dot(&xv)) - dout.dot(&self.matrix.dot(&xv));
        y.into_shape_with_order(self.out_shape).expect("output shape")
    }
}

fn block_diag(block: &Array2<f64>, copies: usize) -> Array2<f64> {
    let n = block.nrows();
    let mut out = Array2::zeros((n * copies, n * copies));
    for i in 0..copies {
        out.slice_mut(s![i * n..(i + 1) * n, i * n..(i + 1) * n]).assign(block);
    }
    out
}

impl ProbeMap for LinearProbe {
    fn input_action(&self) -> GroupAction {
        self.input
    }
    fn output_action(&self) -> GroupAction {
        self.output
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn eval(&self, x: &Array2<f64>) -> Result<Array2<f64>, LieError> {
        if x.dim() != self.in_shape {
            return Err(LieError::ShapeMismatch {
                expected: self.in_shape,
                actual: x.dim(),
            });
        }
        let xv = ndarray::Array1::from_iter(x.iter().copied());
        Ok(self
            .matrix
            .dot(&xv)
            .into_shape_with_order(self.out_shape)
            .expect("output shape"))
    }
}

/// Which part of a separation model a [`ModelProbe`] exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// `f_NN`: signal → `S` output rows.
    Full,
    /// `f_dec ∘ f_enc`: signal → one output row.
    NoMask,
    /// `f_enc`: signal → latent.
    Encoder,
    /// `f_mask`: latent → masked latents.
    Mask,
    /// `f_dec`: masked latents → output rows.
    Decoder,
}

pub struct ModelProbe<'a> {
    pub model: &'a SeparationModel,
    pub part: Part,
    pub window: WindowSpec,
}

impl<'a> ModelProbe<'a> {
    pub fn new(model: &'a SeparationModel, part: Part, window: WindowSpec) -> Self {
        Self { model, part, window }
    }

    fn signal_action(&self) -> GroupAction {
        GroupAction::signal(self.model.sample_rate(), self.window)
    }

    fn latent_action(&self) -> GroupAction {
        GroupAction::latent(self.model.frame_rate(), self.window)
    }

    fn single_row<'b>(&self, x: &'b Array2<f64>) -> Result<&'b [f64], LieError> {
        if x.nrows() != 1 {
            return Err(LieError::ShapeMismatch {
                expected: (1, x.ncols()),
                actual: x.dim(),
            });
        }
        Ok(x.as_slice().expect("standard layout input"))
    }
}

impl ProbeMap for ModelProbe<'_> {
    fn input_action(&self) -> GroupAction {
        match self.part {
            Part::Full | Part::NoMask | Part::Encoder => self.signal_action(),
            Part::Mask | Part::Decoder => self.latent_action(),
        }
    }

    fn output_action(&self) -> GroupAction {
        match self.part {
            Part::Full | Part::NoMask | Part::Decoder => self.signal_action(),
            Part::Encoder | Part::Mask => self.latent_action(),
        }
    }

    fn is_linear(&self) -> bool {
        let m = self.model;
        match self.part {
            Part::Full => m.encoder_is_linear() && m.mask_is_linear() && m.decoder_is_linear(),
            Part::NoMask => m.encoder_is_linear() && m.decoder_is_linear(),
            Part::Encoder => m.encoder_is_linear(),
            Part::Mask => m.mask_is_linear(),
            Part::Decoder => m.decoder_is_linear(),
        }
    }

    fn eval(&self, x: &Array2<f64>) -> Result<Array2<f64>, LieError> {
        let m = self.model;
        let x = x.as_standard_layout().into_owned();
        Ok(match self.part {
            Part::Full => m.forward(self.single_row(&x)?)?,
            Part::NoMask => m.forward_no_mask(self.single_row(&x)?)?,
            Part::Encoder => m.encode(self.single_row(&x)?)?,
            Part::Mask => m.mask(&x)?,
            Part::Decoder => m.decode(&x)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `(h_r − h_{−r}) / 2r` in the group parameter.
    CentralFd,
    /// `J_f(x)[D_in x] − D_out f(x)`.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub estimator: Estimator,
    pub r_step: f64,
    /// Combine steps `r` and `r/2` for the central-difference estimator.
    pub richardson: bool,
    pub jvp_eps: f64,
    pub window: WindowSpec,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            estimator: Estimator::Linearized,
            r_step: 1e-3,
            richardson: true,
            jvp_eps: 1e-4,
            window: WindowSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieEstimate {
    pub vector: Array2<f64>,
    pub estimator: Estimator,
    pub step: f64,
    pub error_estimate: f64,
}

impl LieEstimate {
    pub fn norm(&self) -> f64 {
        frobenius(&self.vector)
    }
}

pub fn frobenius(v: &Array2<f64>) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn check_finite(v: &Array2<f64>, what: &'static str) -> Result<(), LieError> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(LieError::NonFinite(what))
    }
}

/// Crop or zero-pad every row to `cols` columns and keep the first `rows`.
fn reconcile(v: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if v.dim() == shape {
        return v;
    }
    let mut out = Array2::zeros(shape);
    let r = v.nrows().min(shape.0);
    let c = v.ncols().min(shape.1);
    out.slice_mut(s![..r, ..c]).assign(&v.slice(s![..r, ..c]));
    out
}

/// `h_r(x) = τ'(g_r)⁻¹ f(τ(g_r) x)`, reconciled to `shape`.
fn conjugated(f: &dyn ProbeMap, x: &Array2<f64>, r: f64, shape: (usize, usize)) -> Result<Array2<f64>, LieError> {
    let moved = f.input_action().apply(r, x)?;
    let y = f.eval(&moved)?;
    check_finite(&y, "probe output")?;
    let back = f.output_action().apply(-r, &y)?;
    Ok(reconcile(back, shape))
}

fn central_difference(f: &dyn ProbeMap, x: &Array2<f64>, r: f64, shape: (usize, usize)) -> Result<Array2<f64>, LieError> {
    let (plus, minus) = rayon::join(|| conjugated(f, x, r, shape), || conjugated(f, x, -r, shape));
    Ok((plus? - minus?) / (2.0 * r))
}

fn check_step(r: f64, len: usize) -> Result<(), LieError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(LieError::InvalidStep(r));
    }
    let grown = crate::resample::output_length(r, len);
    if (grown - len) * 10 > len {
        return Err(LieError::StepTooLarge { r, len });
    }
    Ok(())
}

/// Central difference at `r_step`; `error_estimate` is the distance to
/// the estimate at `r_step / 2`.
pub fn lie_fd(f: &dyn ProbeMap, x: &Array2<f64>, r_step: f64) -> Result<LieEstimate, LieError> {
    let (e_r, e_half) = fd_pair(f, x, r_step)?;
    let error_estimate = frobenius(&(&e_half.vector - &e_r.vector));
    Ok(LieEstimate {
        error_estimate,
        ..e_r
    })
}

/// Richardson-extrapolated central difference from steps `r` and `r/2`.
pub fn lie_fd_extrapolated(f: &dyn ProbeMap, x: &Array2<f64>, r_step: f64) -> Result<LieEstimate, LieError> {
    let (e_r, e_half) = fd_pair(f, x, r_step)?;
    richardson(&e_r, &e_half)
}

fn fd_pair(f: &dyn ProbeMap, x: &Array2<f64>, r_step: f64) -> Result<(LieEstimate, LieEstimate), LieError> {
    check_finite(x, "input")?;
    check_step(r_step, x.ncols())?;
    let y0 = f.eval(x)?;
    check_finite(&y0, "probe output")?;
    let shape = y0.dim();
    let one = |r: f64| -> Result<LieEstimate, LieError> {
        Ok(LieEstimate {
            vector: central_difference(f, x, r, shape)?,
            estimator: Estimator::CentralFd,
            step: r,
            error_estimate: 0.0,
        })
    };
    Ok((one(r_step)?, one(r_step / 2.0)?))
}

/// `(4 E_{r/2} − E_r) / 3`, with `‖E_{r/2} − E_r‖` as error estimate.
pub fn richardson(e_r: &LieEstimate, e_half: &LieEstimate) -> Result<LieEstimate, LieError> {
    if e_r.vector.dim() != e_half.vector.dim() {
        return Err(LieError::ShapeMismatch {
            expected: e_r.vector.dim(),
            actual: e_half.vector.dim(),
        });
    }
    let vector = (&e_half.vector * 4.0 - &e_r.vector) / 3.0;
    Ok(LieEstimate {
        vector,
        estimator: e_r.estimator,
        step: e_half.step,
        error_estimate: frobenius(&(&e_half.vector - &e_r.vector)),
    })
}

/// Directional derivative `J_f(x) v`.
///
/// Linear probes return `f(v)`. Otherwise a central difference with step
/// `ε ‖x‖ / ‖v‖` (`ε / ‖v‖` when `x = 0`).
pub fn jvp(f: &dyn ProbeMap, x: &Array2<f64>, v: &Array2<f64>, eps: f64) -> Result<Array2<f64>, LieError> {
    if v.dim() != x.dim() {
        return Err(LieError::ShapeMismatch {
            expected: x.dim(),
            actual: v.dim(),
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(LieError::InvalidStep(eps));
    }
    if f.is_linear() {
        let y = f.eval(v)?;
        check_finite(&y, "jvp")?;
        return Ok(y);
    }
    let vn = frobenius(v);
    if vn == 0.0 {
        let y = f.eval(x)?;
        return Ok(Array2::zeros(y.dim()));
    }
    let xn = frobenius(x);
    let delta = eps * if xn > 0.0 { xn } else { 1.0 } / vn;
    let (plus, minus) = rayon::join(|| f.eval(&(x + &(v * delta))), || f.eval(&(x - &(v * delta))));
    let out = (plus? - minus?) / (2.0 * delta);
    check_finite(&out, "jvp")?;
    Ok(out)
}

/// Product-rule estimate `J_f(x)[D_in x] − D_out f(x)`.
pub fn lie_linearized(f: &dyn ProbeMap, x: &Array2<f64>, eps: f64) -> Result<LieEstimate, LieError> {
    check_finite(x, "input")?;
    let dx = f.input_action().derivative(x);
    let y = f.eval(x)?;
    check_finite(&y, "probe output")?;
    let jv = jvp(f, x, &dx, eps)?;
    let vector = reconcile(jv, y.dim()) - f.output_action().derivative(&y);
    Ok(LieEstimate {
        vector,
        estimator: Estimator::Linearized,
        step: if f.is_linear() { 0.0 } else { eps },
        error_estimate: 0.0,
    })
}

/// Dispatch on `settings.estimator`.
pub fn lie(f: &dyn ProbeMap, x: &Array2<f64>, settings: &EstimatorSettings) -> Result<LieEstimate, LieError> {
    match settings.estimator {
        Estimator::Linearized => lie_linearized(f, x, settings.jvp_eps),
        Estimator::CentralFd if settings.richardson => lie_fd_extrapolated(f, x, settings.r_step),
        Estimator::CentralFd => lie_fd(f, x, settings.r_step),
    }
}

pub fn as_row(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape")
}

/// `ℒf_mask` at `u = f_enc(x)`, latent action on both sides.
pub fn lie_layer_mask(model: &SeparationModel, x: &[f64], settings: &EstimatorSettings) -> Result<LieEstimate, LieError> {
    let u = model.encode(x)?;
    lie(&ModelProbe::new(model, Part::Mask, settings.window), &u, settings)
}

/// The three-way decomposition `ℒf_NN = ℒf_dec + J_dec ℒf_mask + J_dec J_mask ℒf_enc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTerms {
    pub term_dec: Array2<f64>,
    pub term_mask: Array2<f64>,
    pub term_enc: Array2<f64>,
    pub total: Array2<f64>,
    /// `‖total − Σ terms‖ / ‖total‖` (0 when both vanish).
    pub residual: f64,
}

pub fn lie_chain_terms(model: &SeparationModel, x: &[f64], settings: &EstimatorSettings) -> Result<ChainTerms, LieError> {
    let w = settings.window;
    let enc = ModelProbe::new(model, Part::Encoder, w);
    let mask = ModelProbe::new(model, Part::Mask, w);
    let dec = ModelProbe::new(model, Part::Decoder, w);
    let full = ModelProbe::new(model, Part::Full, w);
    let xr = as_row(x);
    let u = model.encode(x)?;
    let v = model.mask(&u)?;
    let term_dec = lie(&dec, &v, settings)?.vector;
    let l_mask = lie(&mask, &u, settings)?.vector;
    let term_mask = jvp(&dec, &v, &l_mask, settings.jvp_eps)?;
    let l_enc = lie(&enc, &xr, settings)?.vector;
    let through_mask = jvp(&mask, &u, &l_enc, settings.jvp_eps)?;
    let term_enc = jvp(&dec, &v, &through_mask, settings.jvp_eps)?;
    let total = lie(&full, &xr, settings)?.vector;
    let shape = total.dim();
    let term_dec = reconcile(term_dec, shape);
    let term_mask = reconcile(term_mask, shape);
    let term_enc = reconcile(term_enc, shape);
    let diff = &total - &term_dec - &term_mask - &term_enc;
    let tn = frobenius(&total);
    let dn = frobenius(&diff);
    let residual = if tn > 0.0 { dn / tn } else if dn == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ChainTerms {
        term_dec,
        term_mask,
        term_enc,
        total,
        residual,
    })
}
