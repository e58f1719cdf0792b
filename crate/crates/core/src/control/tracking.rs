//! Integral-action tracking on the augmented state `(X_t, η_t)`.

use nalgebra::{Matrix2, Vector2};

use super::{filter_modulo, filter_two_sided, Filtered, StepNoise, StepOutcome, UncertaintyModel};
use crate::error::{Error, Result};
use crate::jscc::SdrTable;
use crate::numerics::GridSpec;
use crate::sysmodel::{AugmentedSpec, SystemSpec};

/// Mean and covariance of the augmented state.
pub type Moments = (Vector2<f64>, Matrix2<f64>);

/// One step of the closed-loop first and second moments of the augmented
/// state under `U_t = −lᵀ X̂ʳ_{t|t}`, with `c_filt` the filtering error
/// covariance. Returns the mean and the covariance about it.
///
/// Uses `E[𝑿 𝑿̃ᵀ] = c_filt`, i.e. the estimate is orthogonal to its error.
pub fn augmented_moments_step(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    c_filt: &Matrix2<f64>,
    l_t: &Vector2<f64>,
    r_t: f64,
    spec: &AugmentedSpec,
    sigma_w2: f64,
) -> Result<Moments> {
    let b = spec.b_vector();
    let m = spec.a_matrix() - b * l_t.transpose();
    let bl = b * l_t.transpose();
    let next_mean = m * mean + Vector2::new(0.0, r_t);
    let cross = m * c_filt * bl.transpose();
    let mut next_cov = m * cov * m.transpose() + bl * c_filt * bl.transpose() + cross + cross.transpose();
    next_cov[(0, 0)] += sigma_w2;
    let next_cov = (next_cov + next_cov.transpose()) * 0.5;
    let slack = 1e-9 * (1.0 + next_cov.abs().max());
    if next_cov[(0, 0)] < -slack || next_cov[(1, 1)] < -slack || next_cov.determinant() < -slack * next_cov.abs().max() {
        return Err(Error::numerical(format!("augmented covariance lost positive semidefiniteness: {next_cov}")));
    }
    Ok((next_mean, next_cov))
}

/// Controller-side state of the tracking schemes.
///
/// The scalar part mirrors [`super::EstimatorState`]. `eta_pred` and
/// `p_eta_pred` are `η̂_t` and `P^{r,η}_{t|t}` for the coming step;
/// `eta_filt`/`p_eta_filt` are their values at the previous step.
/// `mean`/`cov` are the moments of the previous true state `𝑿_{t−1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedEstimatorState {
    pub xhat_pred: f64,
    pub p_pred: f64,
    pub xhat_filt: f64,
    pub p_filt: f64,
    pub eta_pred: f64,
    pub p_eta_pred: f64,
    pub eta_filt: f64,
    pub p_eta_filt: f64,
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl AugmentedEstimatorState {
    /// State after the known initial step `t = 0`, where `𝑿_0 = (0, R_0)`.
    /// Also returns `u_0`.
    pub fn initial(spec: &AugmentedSpec, gain: &Vector2<f64>, sigma_w2: f64) -> (Self, f64) {
        let x0 = spec.initial_state();
        let u0 = -gain.dot(&x0);
        let state = Self {
            xhat_pred: spec.lambda * x0[0] + u0,
            p_pred: sigma_w2,
            xhat_filt: x0[0],
            p_filt: 0.0,
            eta_pred: x0[1] + spec.reference_at(0) - x0[0],
            p_eta_pred: 0.0,
            eta_filt: x0[1],
            p_eta_filt: 0.0,
            mean: x0,
            cov: Matrix2::zeros(),
        };
        (state, u0)
    }

    /// `diag(Pʳ_{t−1|t−1}, P^{r,η}_{t−1|t−1})`.
    pub fn c_filt(&self) -> Matrix2<f64> {
        Matrix2::new(self.p_filt, 0.0, 0.0, self.p_eta_filt)
    }

    pub fn xv_hat_filt(&self) -> Vector2<f64> {
        Vector2::new(self.xhat_filt, self.eta_filt)
    }
}

/// Uniform `(0, 1)` variates selecting the sensor's assumed gain and
/// reference within their bands (unused in worst-case mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandDraw {
    pub gain: f64,
    pub reference: f64,
}

impl Default for BandDraw {
    fn default() -> Self {
        Self {
            gain: 0.5,
            reference: 0.5,
        }
    }
}

fn tracking_update(
    f: &Filtered,
    state: &AugmentedEstimatorState,
    sys: &SystemSpec,
    spec: &AugmentedSpec,
    t: usize,
    gain: &Vector2<f64>,
    moments: Moments,
) -> (f64, AugmentedEstimatorState) {
    let eta = state.eta_pred;
    let u = -gain.dot(&Vector2::new(f.xhat, eta));
    let next = AugmentedEstimatorState {
        xhat_pred: sys.lambda * f.xhat + u,
        p_pred: sys.lambda * sys.lambda * f.p + sys.sigma_w2,
        xhat_filt: f.xhat,
        p_filt: f.p,
        eta_pred: eta + spec.reference_at(t) - f.xhat,
        p_eta_pred: state.p_eta_pred + f.p,
        eta_filt: eta,
        p_eta_filt: state.p_eta_pred,
        mean: moments.0,
        cov: moments.1,
    };
    (u, next)
}

/// Power `E[X_t²]` implied by the previous moments under gain `l` and
/// reference scaling `kappa`.
fn state_power(
    state: &AugmentedEstimatorState,
    spec: &AugmentedSpec,
    t: usize,
    l: &Vector2<f64>,
    kappa: f64,
    sigma_w2: f64,
) -> Result<(f64, Moments)> {
    let moments = augmented_moments_step(
        &(state.mean * kappa),
        &state.cov,
        &state.c_filt(),
        l,
        kappa * spec.reference_at(t - 1),
        spec,
        sigma_w2,
    )?;
    Ok((moments.0[0].powi(2) + moments.1[(0, 0)], moments))
}

/// The sensor's normalization power at step `t` together with the true
/// state power, for audits.
pub fn tracking_sensor_power(
    state: &AugmentedEstimatorState,
    spec: &AugmentedSpec,
    t: usize,
    gain: &Vector2<f64>,
    unc: &UncertaintyModel,
    draw: &BandDraw,
    sigma_w2: f64,
) -> Result<(f64, f64)> {
    let assumed = gain * unc.gain_factor(draw.gain);
    let (p_sens, _) = state_power(state, spec, t, &assumed, unc.reference_factor(draw.reference), sigma_w2)?;
    let (p_true, _) = state_power(state, spec, t, gain, 1.0, sigma_w2)?;
    Ok((p_sens, p_true))
}

/// One step (`t ≥ 1`) of tracking without feedback: the sensor
/// normalizes `X_t` by the power predicted from the moment recursion under
/// its assumed gain and reference, and the controller decodes with its
/// prediction as the known offset.
#[allow(clippy::too_many_arguments)]
pub fn step_tracking(
    xv: &Vector2<f64>,
    state: &AugmentedEstimatorState,
    sys: &SystemSpec,
    spec: &AugmentedSpec,
    t: usize,
    gain: &Vector2<f64>,
    unc: &UncertaintyModel,
    table: &SdrTable,
    noise: &StepNoise,
    draw: &BandDraw,
    grid: &GridSpec,
) -> Result<StepOutcome<AugmentedEstimatorState>> {
    if t == 0 {
        return Err(Error::invalid("step 0 is the known initial state"));
    }
    let assumed = gain * unc.gain_factor(draw.gain);
    let (p_sens, _) = state_power(state, spec, t, &assumed, unc.reference_factor(draw.reference), sys.sigma_w2)?;
    let (_, moments) = state_power(state, spec, t, gain, 1.0, sys.sigma_w2)?;
    let f = filter_modulo(xv[0], state.xhat_pred, state.p_pred, state.xhat_pred, p_sens, sys, table, noise, grid)?;
    let (u, est) = tracking_update(&f, state, sys, spec, t, gain, moments);
    Ok(StepOutcome { a: f.a, b: f.b, est, u })
}

/// Tracking benchmark with the sensor sharing the controller's knowledge
/// and the SI.
pub fn step_tracking_two_sided(
    xv: &Vector2<f64>,
    state: &AugmentedEstimatorState,
    sys: &SystemSpec,
    spec: &AugmentedSpec,
    t: usize,
    gain: &Vector2<f64>,
    noise: &StepNoise,
) -> Result<StepOutcome<AugmentedEstimatorState>> {
    if t == 0 {
        return Err(Error::invalid("step 0 is the known initial state"));
    }
    let (_, moments) = state_power(state, spec, t, gain, 1.0, sys.sigma_w2)?;
    let f = filter_two_sided(xv[0], state.xhat_pred, state.p_pred, sys, noise);
    let (u, est) = tracking_update(&f, state, sys, spec, t, gain, moments);
    Ok(StepOutcome { a: f.a, b: f.b, est, u })
}
