//! Zero-delay joint source–channel codecs for a Gaussian source sent over
//! one AWGN channel use, with Gaussian side information at the receiver.
//!
//! Two transmitters are provided: the linear one, which just rescales the
//! source to unit power, and the modulo family
//! `f(x̄) = α(x̄ − [x̄]_Δ) + β[x̄]_Δ` applied to the unit-power source `x̄`.
//! The modulo receiver computes the posterior mean on a grid.

mod sdr;

pub use sdr::{
    estimate_sdr, optimize_params, sdr_closed_form, SdrCache, SdrEstimate, SdrMethod, SdrTable, SearchGrid,
    TableAxes,
};

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::numerics::{integrate_grid, mod_reduce_unchecked, parallel_sum_unchecked, standard_normal_pdf, GridSpec};

/// Slack allowed on `E[A²] ≤ 1` when deciding whether a triple may transmit.
pub const POWER_TOLERANCE: f64 = 1e-2;

/// Half-width, in posterior standard deviations of the Gaussian factors,
/// of the integration window used by [`decode_modulo_mmse`]. Mass outside
/// is below `e^{-40}` of the peak.
const WINDOW_SIGMAS: f64 = 9.0;

/// The whole grid is searched instead when the windowed peak log-weight is
/// below `-FALLBACK_LOG_PEAK` (the channel output disagrees with the prior
/// and SI) or when the posterior has not decayed by `EDGE_LOG_DROP` at the
/// window edges.
const FALLBACK_LOG_PEAK: f64 = 20.0;
const EDGE_LOG_DROP: f64 = 30.0;
const MIN_LOG_WEIGHT: f64 = 45.0;

thread_local! {
    static LOG_WEIGHTS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// The `(α, β, Δ)` triple of the modulo encoder. `delta = ∞` turns the
/// encoder into the linear map `x̄ ↦ βx̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuloParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl ModuloParams {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid(format!("alpha/beta must be finite, got ({alpha}, {beta})")));
        }
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { alpha, beta, delta })
    }

    /// `(0, 1, ∞)`: sends the normalized source as is.
    pub const fn linear() -> Self {
        Self {
            alpha: 0.0,
            beta: 1.0,
            delta: f64::INFINITY,
        }
    }

    /// `(Δ, α, β) = (3.15, 0.8, −1.15)`.
    pub const fn chen_tuncel() -> Self {
        Self {
            alpha: 0.8,
            beta: -1.15,
            delta: 3.15,
        }
    }

    /// `(Δ, α, β) = (2.15, 1.05, 0)`.
    pub const fn kochman_zamir() -> Self {
        Self {
            alpha: 1.05,
            beta: 0.0,
            delta: 2.15,
        }
    }

    /// The triple used by every control experiment: `(0.75, −1.18, 3.2)`.
    pub const fn control_default() -> Self {
        Self {
            alpha: 0.75,
            beta: -1.18,
            delta: 3.2,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.delta.is_infinite()
    }

    #[inline]
    pub fn encode(&self, x_bar: f64) -> f64 {
        let fine = mod_reduce_unchecked(x_bar, self.delta);
        self.alpha * (x_bar - fine) + self.beta * fine
    }

    /// The encoder multiplied by `gain`; the family is closed under scaling.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            alpha: self.alpha * gain,
            beta: self.beta * gain,
            delta: self.delta,
        }
    }

    /// Parameters `p'` with `p'.encode(u) == self.encode(c·u)` for all `u`.
    pub fn with_input_scale(&self, c: f64) -> Self {
        Self {
            alpha: self.alpha * c,
            beta: self.beta * c,
            delta: self.delta / c,
        }
    }

    /// Scales `(α, β)` down so that a unit-power Gaussian input meets
    /// `E[A²] ≤ 1`. Triples that already do are returned unchanged. Also
    /// returns the applied gain.
    pub fn power_normalized(&self, grid: &GridSpec) -> Result<(Self, f64)> {
        let power = encoder_power(self, grid)?;
        if power <= 1.0 {
            Ok((*self, 1.0))
        } else {
            let gain = power.sqrt().recip();
            Ok((self.scaled(gain), gain))
        }
    }

    pub fn is_power_feasible(&self, grid: &GridSpec) -> Result<bool> {
        Ok(encoder_power(self, grid)? <= 1.0 + POWER_TOLERANCE)
    }
}

pub fn encode_modulo(x_bar: f64, params: &ModuloParams) -> f64 {
    params.encode(x_bar)
}

/// `E[f(X̄)²]` for `X̄ ~ N(0, 1)`.
pub fn encoder_power(params: &ModuloParams, grid: &GridSpec) -> Result<f64> {
    integrate_grid(
        |x| {
            let a = params.encode(x);
            standard_normal_pdf(x) * a * a
        },
        grid,
    )
}

/// Source power, SI noise power and channel SNR (linear) of one JSCC use.
/// `p_z = ∞` means the receiver has no side information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiChannelSpec {
    pub p_x: f64,
    pub p_z: f64,
    pub snr: f64,
}

impl SiChannelSpec {
    pub fn new(p_x: f64, p_z: f64, snr: f64) -> Result<Self> {
        let s = Self { p_x, p_z, snr };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_x > 0.0 && self.p_x.is_finite()) {
            return Err(Error::invalid(format!("p_x must be positive and finite, got {}", self.p_x)));
        }
        if !(self.p_z > 0.0) {
            return Err(Error::invalid(format!("p_z must be positive, got {}", self.p_z)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive and finite, got {}", self.snr)));
        }
        Ok(())
    }
}

pub fn encode_linear(x: f64, p_x: f64) -> Result<f64> {
    if !(p_x > 0.0) {
        return Err(Error::invalid(format!("p_x must be positive, got {p_x}")));
    }
    Ok(x / p_x.sqrt())
}

/// Linear MMSE estimate of `X` from `B = X/√P_X + N` and `Y = X + Z`.
pub fn decode_linear_si(b: f64, y: f64, spec: &SiChannelSpec) -> Result<f64> {
    spec.validate()?;
    Ok(decode_linear_si_unchecked(b, y, spec))
}

#[inline]
pub(crate) fn decode_linear_si_unchecked(b: f64, y: f64, spec: &SiChannelSpec) -> f64 {
    let SiChannelSpec { p_x, p_z, snr } = *spec;
    if p_z.is_infinite() {
        return p_x.sqrt() * snr / (1.0 + snr) * b;
    }
    (p_x.sqrt() * p_z * b + p_x / snr * y) / (p_z + (p_x + p_z) / snr)
}

/// MSE of [`decode_linear_si`]: `P_X / (1 + SNR + P_X/P_Z)`.
pub fn distortion_linear(spec: &SiChannelSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.p_x / (1.0 + spec.snr + spec.p_x / spec.p_z))
}

/// The same distortion evaluated as `P_X ∥ P_Z ∥ (P_X/SNR)`.
pub fn distortion_linear_chain(spec: &SiChannelSpec) -> Result<f64> {
    spec.validate()?;
    let first = parallel_sum_unchecked(spec.p_x, spec.p_z);
    Ok(parallel_sum_unchecked(first, spec.p_x / spec.snr))
}

/// Posterior mean `E[x | b, ỹ]` for the observation model
///
/// * `x ~ N(0, prior_power)`,
/// * `b = f((x + known_offset)/√spec.p_x) + N`, `N ~ N(0, 1/spec.snr)`,
/// * `ỹ = x + Z`, `Z ~ N(0, spec.p_z)`,
///
/// evaluated by trapezoid integration over `u = x/√prior_power` on `grid`.
/// Normally only the grid points where the prior and SI factors are within
/// `e^{-40}` of their peak are visited.
#[allow(clippy::too_many_arguments)]
pub fn decode_modulo_mmse(
    b: f64,
    y_tilde: f64,
    known_offset: f64,
    prior_power: f64,
    params: &ModuloParams,
    spec: &SiChannelSpec,
    grid: &GridSpec,
) -> Result<f64> {
    if !(prior_power > 0.0 && prior_power.is_finite()) {
        return Err(Error::invalid(format!("prior power must be positive, got {prior_power}")));
    }
    if !(b.is_finite() && y_tilde.is_finite() && known_offset.is_finite()) {
        return Err(Error::invalid(format!(
            "decoder inputs must be finite, got b={b}, y={y_tilde}, offset={known_offset}"
        )));
    }
    spec.validate()?;
    let scale = prior_power.sqrt();
    let norm = spec.p_x.sqrt().recip();
    let (precision, centre) = if spec.p_z.is_infinite() {
        (1.0, 0.0)
    } else {
        let precision = 1.0 + prior_power / spec.p_z;
        (precision, scale * y_tilde / spec.p_z / precision)
    };

    let h = grid.step();
    let half_width = WINDOW_SIGMAS / precision.sqrt();
    let last = grid.n_points() - 1;
    let lo_idx = ((centre - half_width - grid.lo()) / h).ceil().max(0.0);
    let hi_idx = ((centre + half_width - grid.lo()) / h).floor().min(last as f64);
    let (lo_idx, hi_idx) = if hi_idx >= lo_idx + 1.0 {
        (lo_idx as usize, hi_idx as usize)
    } else {
        (0, last)
    };

    let weights = PosteriorWeights {
        b,
        centre,
        offset: known_offset,
        scale,
        norm,
        half_snr: 0.5 * spec.snr,
        half_prec: 0.5 * precision,
        params,
        grid,
    };
    let mut moments = weights.moments(lo_idx, hi_idx);
    if (moments.0 < -FALLBACK_LOG_PEAK || moments.3 > moments.0 - EDGE_LOG_DROP) && (lo_idx, hi_idx) != (0, last) {
        moments = weights.moments(0, last);
    }
    let (peak, mass, moment, _) = moments;
    if !(mass > 0.0 && mass.is_finite() && peak.is_finite()) {
        return Err(Error::numerical(format!(
            "posterior mass vanished (b={b}, y={y_tilde}, offset={known_offset}, prior={prior_power})"
        )));
    }
    Ok(scale * moment / mass)
}

struct PosteriorWeights<'a> {
    b: f64,
    centre: f64,
    offset: f64,
    scale: f64,
    norm: f64,
    half_snr: f64,
    half_prec: f64,
    params: &'a ModuloParams,
    grid: &'a GridSpec,
}

impl PosteriorWeights<'_> {
    #[inline]
    fn log_weight(&self, u: f64) -> f64 {
        let d = u - self.centre;
        let residual = self.b - self.params.encode((self.scale * u + self.offset) * self.norm);
        -self.half_prec * d * d - self.half_snr * residual * residual
    }

    /// Peak log-weight, trapezoid mass and first moment over grid indices
    /// `lo..=hi` (relative to `e^peak`), and the larger edge log-weight.
    fn moments(&self, lo: usize, hi: usize) -> (f64, f64, f64, f64) {
        LOG_WEIGHTS.with(|buf| {
            let mut log_w = buf.borrow_mut();
            // Same values as `GridSpec::point`, with the step hoisted.
            let (g_lo, g_hi, h, last) = (self.grid.lo(), self.grid.hi(), self.grid.step(), self.grid.n_points() - 1);
            let point = |i: usize| if i == last { g_hi } else { g_lo + i as f64 * h };
            log_w.clear();
            log_w.extend((lo..=hi).map(|i| self.log_weight(point(i))));
            let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut mass, mut moment) = (0.0, 0.0);
            let n = log_w.len();
            for (k, &lw) in log_w.iter().enumerate() {
                // Terms below e^-MIN_LOG_WEIGHT cannot move the sums.
                if lw - peak < -MIN_LOG_WEIGHT {
                    continue;
                }
                let edge = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
                let w = edge * (lw - peak).exp();
                mass += w;
                moment += w * point(lo + k);
            }
            (peak, mass, moment, log_w[0].max(log_w[n - 1]))
        })
    }
}
