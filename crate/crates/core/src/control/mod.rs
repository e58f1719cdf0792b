//! Sensor/controller pairs for the scalar plant, the Riccati recursions
//! that supply their gains, and the power bookkeeping used when the sensor
//! does not see the controller's actions.
//!
//! Each `step_*` function performs one time step: the sensor forms the
//! channel input, the channel and SI noises are applied, the controller
//! updates its estimate and emits `u_t`. Moving the plant is left to the
//! caller.

mod riccati;
mod tracking;

pub use riccati::{riccati_scalar, riccati_vector, spectral_radius, RiccatiScalar, RiccatiVector};
pub use tracking::{
    augmented_moments_step, step_tracking, step_tracking_two_sided, tracking_sensor_power, AugmentedEstimatorState,
    BandDraw,
};

use crate::error::{Error, Result};
use crate::jscc::{decode_linear_si_unchecked, decode_modulo_mmse, SdrTable, SiChannelSpec};
use crate::numerics::{parallel_sum_unchecked, GridSpec};
use crate::sysmodel::{channel_transmit, si_observe, SystemSpec};

/// The controller's prediction `X̂ʳ_{t|t−1}`, `Pʳ_{t|t−1}` for the coming
/// step and the filtered `X̂ʳ_{t−1|t−1}`, `Pʳ_{t−1|t−1}` it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub xhat_pred: f64,
    pub p_pred: f64,
    pub xhat_filt: f64,
    pub p_filt: f64,
}

impl EstimatorState {
    /// Before `t = 1`: the state starts at zero, so `X_1 = W_0`.
    pub fn initial(sigma_w2: f64) -> Self {
        Self {
            xhat_pred: 0.0,
            p_pred: sigma_w2,
            xhat_filt: 0.0,
            p_filt: 0.0,
        }
    }
}

/// Channel and SI noise realizations for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepNoise {
    /// Variance `1/SNR`.
    pub n: f64,
    /// Variance `σ_Z²`.
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S> {
    pub a: f64,
    pub b: f64,
    pub est: S,
    pub u: f64,
}

/// Filtered estimate of the current state and its MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Filtered {
    pub a: f64,
    pub b: f64,
    pub xhat: f64,
    pub p: f64,
}

/// `u = −L X̂ʳ_{t|t}` followed by the one-step prediction.
fn control_and_predict(f: &Filtered, sys: &SystemSpec, gain: f64) -> (f64, EstimatorState) {
    let u = -gain * f.xhat;
    let est = EstimatorState {
        xhat_pred: sys.lambda * f.xhat + u,
        p_pred: sys.lambda * sys.lambda * f.p + sys.sigma_w2,
        xhat_filt: f.xhat,
        p_filt: f.p,
    };
    (u, est)
}

fn outcome(f: Filtered, sys: &SystemSpec, gain: f64) -> StepOutcome<EstimatorState> {
    let (u, est) = control_and_predict(&f, sys, gain);
    StepOutcome { a: f.a, b: f.b, est, u }
}

/// `ρ = Pʳ/(Pʳ + σ_Z²)`, zero without SI.
pub fn si_correlation(p_pred: f64, sigma_z2: f64) -> f64 {
    if sigma_z2.is_infinite() {
        0.0
    } else {
        p_pred / (p_pred + sigma_z2)
    }
}

/// Power of the innovation given the SI: `σ_Z² ∥ Pʳ`.
pub fn innovation_power(p_pred: f64, sigma_z2: f64) -> f64 {
    parallel_sum_unchecked(sigma_z2, p_pred)
}

pub(crate) fn filter_two_sided(x: f64, xhat_pred: f64, p_pred: f64, sys: &SystemSpec, noise: &StepNoise) -> Filtered {
    let rho = si_correlation(p_pred, sys.sigma_z2);
    let p_innov = innovation_power(p_pred, sys.sigma_z2);
    let y = si_observe(x, noise.z);
    let innovation = (1.0 - rho) * (x - xhat_pred) - rho * noise.z;
    let a = innovation / p_innov.sqrt();
    let b = channel_transmit(a, noise.n);
    let channel_estimate = p_innov.sqrt() / (1.0 + sys.snr.recip()) * b;
    Filtered {
        a,
        b,
        xhat: xhat_pred + rho * (y - xhat_pred) + channel_estimate,
        p: p_innov / (1.0 + sys.snr),
    }
}

fn filter_linear_si(x: f64, xhat_pred: f64, p_pred: f64, sys: &SystemSpec, noise: &StepNoise) -> Filtered {
    let a = (x - xhat_pred) / p_pred.sqrt();
    let b = channel_transmit(a, noise.n);
    let y_tilde = si_observe(x, noise.z) - xhat_pred;
    let spec = SiChannelSpec {
        p_x: p_pred,
        p_z: sys.sigma_z2,
        snr: sys.snr,
    };
    Filtered {
        a,
        b,
        xhat: xhat_pred + decode_linear_si_unchecked(b, y_tilde, &spec),
        p: parallel_sum_unchecked(parallel_sum_unchecked(p_pred, sys.sigma_z2), p_pred / sys.snr),
    }
}

/// Sends `f((x − x̂ʳ + offset)/√p_norm)` and decodes the prediction error
/// with `offset` known at the controller. The MSE update reads the table
/// at input scale `√(Pʳ/p_norm)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn filter_modulo(
    x: f64,
    xhat_pred: f64,
    p_pred: f64,
    offset: f64,
    p_norm: f64,
    sys: &SystemSpec,
    table: &SdrTable,
    noise: &StepNoise,
    grid: &GridSpec,
) -> Result<Filtered> {
    let params = table.params();
    let err = x - xhat_pred;
    let a = params.encode((err + offset) / p_norm.sqrt());
    let b = channel_transmit(a, noise.n);
    let y_tilde = si_observe(x, noise.z) - xhat_pred;
    let correction = if params.is_linear() {
        linear_offset_posterior_mean(params.beta / p_norm.sqrt(), b, y_tilde, offset, p_pred, sys)
    } else {
        let spec = SiChannelSpec {
            p_x: p_norm,
            p_z: sys.sigma_z2,
            snr: sys.snr,
        };
        decode_modulo_mmse(b, y_tilde, offset, p_pred, params, &spec, grid)?
    };
    let scale = (p_pred / p_norm).sqrt();
    let ratio = if sys.sigma_z2.is_infinite() { 0.0 } else { p_pred / sys.sigma_z2 };
    Ok(Filtered {
        a,
        b,
        xhat: xhat_pred + correction,
        p: p_pred / table.sdr(ratio, scale),
    })
}

// Exact posterior mean of `e ~ N(0, p)` from `b = g(e + offset) + N` and `ỹ = e + Z`.
fn linear_offset_posterior_mean(g: f64, b: f64, y_tilde: f64, offset: f64, p: f64, sys: &SystemSpec) -> f64 {
    let si = if sys.sigma_z2.is_infinite() { 0.0 } else { sys.sigma_z2.recip() };
    let precision = p.recip() + si + g * g * sys.snr;
    (y_tilde * si + g * sys.snr * (b - g * offset)) / precision
}

/// Two-sided SI: the sensor also sees `Y_t` and sends the innovation given it.
pub fn step_two_sided(x: f64, est: &EstimatorState, sys: &SystemSpec, gain: f64, noise: &StepNoise) -> StepOutcome<EstimatorState> {
    outcome(filter_two_sided(x, est.xhat_pred, est.p_pred, sys, noise), sys, gain)
}

/// Receiver-only SI, linear transmission of the prediction error.
pub fn step_linear_si(x: f64, est: &EstimatorState, sys: &SystemSpec, gain: f64, noise: &StepNoise) -> StepOutcome<EstimatorState> {
    outcome(filter_linear_si(x, est.xhat_pred, est.p_pred, sys, noise), sys, gain)
}

/// Receiver-only SI, modulo transmission of the normalized prediction
/// error. The encoder is `table.params()`.
pub fn step_modulo_si(
    x: f64,
    est: &EstimatorState,
    sys: &SystemSpec,
    gain: f64,
    table: &SdrTable,
    noise: &StepNoise,
    grid: &GridSpec,
) -> Result<StepOutcome<EstimatorState>> {
    let f = filter_modulo(x, est.xhat_pred, est.p_pred, 0.0, est.p_pred, sys, table, noise, grid)?;
    Ok(outcome(f, sys, gain))
}

/// `P_{X_t} = σ_W² + (λ − L)² P_{X_{t−1}} + L(2λ − L) Pʳ_{t−1|t−1}`.
pub fn state_power_step(p_x_prev: f64, p_r_prev: f64, lambda: f64, l_t: f64, sigma_w2: f64) -> Result<f64> {
    if !(p_x_prev.is_finite() && p_r_prev.is_finite() && lambda.is_finite() && l_t.is_finite()) {
        return Err(Error::invalid("state_power_step: inputs must be finite"));
    }
    if p_x_prev < 0.0 || p_r_prev < 0.0 || !(sigma_w2 > 0.0) {
        return Err(Error::invalid(format!(
            "state_power_step: powers must be nonnegative (got {p_x_prev}, {p_r_prev}, {sigma_w2})"
        )));
    }
    let p = sigma_w2 + (lambda - l_t).powi(2) * p_x_prev + l_t * (2.0 * lambda - l_t) * p_r_prev;
    if p < 0.0 {
        return Err(Error::numerical(format!(
            "negative state power {p} from P_X={p_x_prev}, P_r={p_r_prev}, L={l_t}"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalingMode {
    WorstCase,
    Randomized,
}

/// Band of gains `[l_lo·L, l_hi·L]` and references `[r_lo·R, r_hi·R]` the
/// sensor designs for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    pub l_lo: f64,
    pub l_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub mode: ScalingMode,
}

impl UncertaintyModel {
    pub fn new(l_lo: f64, l_hi: f64, r_lo: f64, r_hi: f64, mode: ScalingMode) -> Result<Self> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite();
        if !ok(l_lo, l_hi) || !ok(r_lo, r_hi) {
            return Err(Error::invalid(format!(
                "uncertainty factors need 0 < lo <= 1 <= hi, got [{l_lo}, {l_hi}] and [{r_lo}, {r_hi}]"
            )));
        }
        Ok(Self {
            l_lo,
            l_hi,
            r_lo,
            r_hi,
            mode,
        })
    }

    /// No uncertainty at all.
    pub fn exact() -> Self {
        Self {
            l_lo: 1.0,
            l_hi: 1.0,
            r_lo: 1.0,
            r_hi: 1.0,
            mode: ScalingMode::WorstCase,
        }
    }

    /// Multiplier on the true gain assumed by the sensor. `draw` is a
    /// uniform `(0, 1)` variate, ignored in worst-case mode, where the
    /// smallest gain is assumed.
    pub fn gain_factor(&self, draw: f64) -> f64 {
        match self.mode {
            ScalingMode::WorstCase => self.l_lo,
            ScalingMode::Randomized => self.l_lo + (self.l_hi - self.l_lo) * draw,
        }
    }

    /// Multiplier on the true reference; the largest in worst-case mode.
    pub fn reference_factor(&self, draw: f64) -> f64 {
        match self.mode {
            ScalingMode::WorstCase => self.r_hi,
            ScalingMode::Randomized => self.r_lo + (self.r_hi - self.r_lo) * draw,
        }
    }
}

/// Controller state for the scheme without feedback, plus the nominal
/// state power `P_{X_{t−1}}` both ends propagate with the true gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainEstimatorState {
    pub est: EstimatorState,
    pub p_state: f64,
}

impl UncertainEstimatorState {
    pub fn initial(sigma_w2: f64) -> Self {
        Self {
            est: EstimatorState::initial(sigma_w2),
            p_state: 0.0,
        }
    }
}

/// One step without controller-to-sensor feedback: the sensor normalizes
/// the full state by the power it would have under its assumed gain
/// `gain_factor(draw)·L`, and the controller decodes with its prediction
/// as the known offset.
#[allow(clippy::too_many_arguments)]
pub fn step_uncertain(
    x: f64,
    state: &UncertainEstimatorState,
    sys: &SystemSpec,
    true_gain: f64,
    unc: &UncertaintyModel,
    table: &SdrTable,
    noise: &StepNoise,
    draw: f64,
    grid: &GridSpec,
) -> Result<StepOutcome<UncertainEstimatorState>> {
    let est = &state.est;
    let assumed_gain = unc.gain_factor(draw) * true_gain;
    let p_sens = state_power_step(state.p_state, est.p_filt, sys.lambda, assumed_gain, sys.sigma_w2)?;
    let p_true = state_power_step(state.p_state, est.p_filt, sys.lambda, true_gain, sys.sigma_w2)?;
    let f = filter_modulo(x, est.xhat_pred, est.p_pred, est.xhat_pred, p_sens, sys, table, noise, grid)?;
    let (u, est) = control_and_predict(&f, sys, true_gain);
    Ok(StepOutcome {
        a: f.a,
        b: f.b,
        est: UncertainEstimatorState { est, p_state: p_true },
        u,
    })
}

/// The normalization power the sensor uses at the coming step, exposed
/// for power audits.
pub fn sensor_state_power(
    state: &UncertainEstimatorState,
    sys: &SystemSpec,
    true_gain: f64,
    unc: &UncertaintyModel,
    draw: f64,
) -> Result<f64> {
    state_power_step(state.p_state, state.est.p_filt, sys.lambda, unc.gain_factor(draw) * true_gain, sys.sigma_w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jscc::ModuloParams;
    use crate::numerics::RandomStream;
    use crate::sysmodel::plant_step;
    use proptest::prelude::*;

    fn fig3() -> SystemSpec {
        SystemSpec::new(2.0, 1.0, 0.125, 10f64.powf(0.6), 200).unwrap()
    }

    const L: f64 = 1.791_287_847_477_92;

    #[test]
    fn two_sided_noiseless_fixed_point() {
        let sys = fig3();
        let est = EstimatorState {
            xhat_pred: 1.5,
            p_pred: 1.0,
            xhat_filt: 0.0,
            p_filt: 0.0,
        };
        let out = step_two_sided(1.5, &est, &sys, L, &StepNoise::default());
        assert_eq!(out.a, 0.0);
        assert_eq!(out.est.xhat_filt, 1.5);
        assert_eq!(out.u, -L * 1.5);
    }

    #[test]
    fn two_sided_mse_chain() {
        let sys = SystemSpec::new(2.0, 1.0, 0.125, 4.0, 10).unwrap();
        let est = EstimatorState::initial(1.0);
        let out = step_two_sided(0.3, &est, &sys, L, &StepNoise::default());
        assert!((innovation_power(1.0, 0.125) - 1.0 / 9.0).abs() < 1e-15);
        assert!((out.est.p_filt - 1.0 / 45.0).abs() < 1e-15);
        assert!((out.est.p_pred - (4.0 / 45.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn linear_si_examples() {
        let sys = SystemSpec::new(2.0, 1.0, 0.125, 4.0, 10).unwrap();
        let est = EstimatorState {
            xhat_pred: -0.4,
            p_pred: 1.0,
            xhat_filt: 0.0,
            p_filt: 0.0,
        };
        let out = step_linear_si(-0.4, &est, &sys, L, &StepNoise::default());
        assert_eq!(out.a, 0.0);
        assert_eq!(out.u, -L * -0.4);
        assert!((out.est.p_filt - 1.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn modulo_noiseless_zero_error_keeps_estimate() {
        let sys = fig3();
        let g = GridSpec::standard();
        let tx = ModuloParams::control_default().power_normalized(&g).unwrap().0;
        let table =
            SdrTable::build(tx, sys.snr, &crate::jscc::TableAxes::ratios_only(8.0, 8.0, 1).unwrap(), 10_000, 1, &g)
                .unwrap();
        let est = EstimatorState::initial(1.0);
        let out = step_modulo_si(0.0, &est, &sys, L, &table, &StepNoise::default(), &g).unwrap();
        assert_eq!(out.a, 0.0);
        assert!(out.est.xhat_filt.abs() < 1e-12);
    }

    fn common_noise_paths(steps: usize, seed: u64) -> Vec<(f64, StepNoise)> {
        let sys = fig3();
        let mut rng = RandomStream::new(seed, 0);
        (0..steps)
            .map(|_| {
                let w = rng.normal(sys.sigma_w2);
                let n = rng.normal(sys.snr.recip());
                let z = rng.normal(sys.sigma_z2);
                (w, StepNoise { n, z })
            })
            .collect()
    }

    #[test]
    fn modulo_with_linear_params_tracks_linear_scheme() {
        let sys = fig3();
        let g = GridSpec::standard();
        let table = SdrTable::closed_form(ModuloParams::linear(), sys.snr).unwrap();
        let noises = common_noise_paths(60, 4);
        let (mut x_lin, mut x_mod) = (noises[0].0, noises[0].0);
        let (mut e_lin, mut e_mod) = (EstimatorState::initial(1.0), EstimatorState::initial(1.0));
        for (w, n) in &noises[1..] {
            let a = step_linear_si(x_lin, &e_lin, &sys, L, n);
            let b = step_modulo_si(x_mod, &e_mod, &sys, L, &table, n, &g).unwrap();
            assert!((a.u - b.u).abs() < 1e-4 && (a.est.p_filt - b.est.p_filt).abs() < 1e-12);
            x_lin = plant_step(x_lin, a.u, *w, sys.lambda);
            x_mod = plant_step(x_mod, b.u, *w, sys.lambda);
            e_lin = a.est;
            e_mod = b.est;
            assert!((x_lin - x_mod).abs() < 1e-4);
        }
    }

    #[test]
    fn grid_decoder_agrees_with_linear_fast_path() {
        let sys = fig3();
        let g = GridSpec::standard();
        let lin = ModuloParams::linear();
        let spec = SiChannelSpec {
            p_x: 3.0,
            p_z: sys.sigma_z2,
            snr: sys.snr,
        };
        for &(b, y, off) in &[(0.4, 0.1, 0.7), (-1.1, -0.3, 2.0), (0.0, 0.2, -1.0)] {
            let grid_mean = decode_modulo_mmse(b, y, off, 0.9, &lin, &spec, &g).unwrap();
            let exact = linear_offset_posterior_mean(3f64.sqrt().recip(), b, y, off, 0.9, &sys);
            assert!((grid_mean - exact).abs() < 1e-6, "{grid_mean} vs {exact}");
        }
    }

    #[test]
    fn state_power_examples() {
        assert_eq!(state_power_step(0.0, 0.0, 2.0, L, 1.0).unwrap(), 1.0);
        let p = state_power_step(1.0, 0.2, 2.0, 1.79129, 1.0).unwrap();
        let expected = 1.0 + (2.0f64 - 1.79129).powi(2) + 1.79129 * (4.0 - 1.79129) * 0.2;
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 1.834_848).abs() < 1e-6);
        assert!(state_power_step(-1.0, 0.0, 2.0, L, 1.0).is_err());
    }

    #[test]
    fn uncertainty_factors() {
        let wc = UncertaintyModel::new(1.0 / 3.0, 3.0, 1.0 / 3.0, 3.0, ScalingMode::WorstCase).unwrap();
        assert_eq!(wc.gain_factor(0.9), 1.0 / 3.0);
        assert_eq!(wc.reference_factor(0.1), 3.0);
        let rnd = UncertaintyModel { mode: ScalingMode::Randomized, ..wc };
        assert!((rnd.gain_factor(0.5) - (1.0 / 3.0 + 3.0) / 2.0).abs() < 1e-15);
        assert!(UncertaintyModel::new(1.2, 3.0, 1.0, 1.0, ScalingMode::WorstCase).is_err());
    }

    #[test]
    fn uncertain_zero_state_transmits_zero() {
        let sys = SystemSpec::new(2.0, 1.0, 1.0 / 6.0, 10f64.powf(0.6), 10).unwrap();
        let g = GridSpec::standard();
        let tx = ModuloParams::control_default().power_normalized(&g).unwrap().0;
        let table =
            SdrTable::build(tx, sys.snr, &crate::jscc::TableAxes::ratios_only(6.0, 6.0, 1).unwrap(), 10_000, 1, &g)
                .unwrap();
        let state = UncertainEstimatorState::initial(1.0);
        let unc = UncertaintyModel::new(1.0 / 3.0, 3.0, 1.0, 1.0, ScalingMode::WorstCase).unwrap();
        let out = step_uncertain(0.0, &state, &sys, L, &unc, &table, &StepNoise::default(), 0.5, &g).unwrap();
        assert_eq!(out.a, 0.0);
        assert!(out.est.est.xhat_filt.abs() < 1e-12);
    }

    /// Linear transmission of the full state normalized by `P_X`, decoded
    /// by removing the known prediction and running the linear-SI decoder
    /// at the reduced effective SNR `SNR·Pʳ/P_X`.
    fn full_state_linear_oracle(
        x: f64,
        est: &EstimatorState,
        p_x: f64,
        sys: &SystemSpec,
        noise: &StepNoise,
    ) -> (f64, f64) {
        let b = x / p_x.sqrt() + noise.n;
        let rescale = (p_x / est.p_pred).sqrt();
        let b_err = (b - est.xhat_pred / p_x.sqrt()) * rescale;
        let eff = SiChannelSpec::new(est.p_pred, sys.sigma_z2, sys.snr / (rescale * rescale)).unwrap();
        let y_tilde = x + noise.z - est.xhat_pred;
        let xf = est.xhat_pred + crate::jscc::decode_linear_si(b_err, y_tilde, &eff).unwrap();
        (xf, crate::jscc::distortion_linear(&eff).unwrap())
    }

    #[test]
    fn exact_band_with_linear_params_matches_full_state_linear_scheme() {
        let sys = fig3();
        let g = GridSpec::standard();
        let table = SdrTable::closed_form(ModuloParams::linear(), sys.snr).unwrap();
        let noises = common_noise_paths(60, 8);
        let (mut x_ref, mut x_unc) = (noises[0].0, noises[0].0);
        let mut e_ref = EstimatorState::initial(1.0);
        let mut p_ref = 0.0;
        let mut e_unc = UncertainEstimatorState::initial(1.0);
        for (w, n) in &noises[1..] {
            let p_x = state_power_step(p_ref, e_ref.p_filt, sys.lambda, L, sys.sigma_w2).unwrap();
            let (xf, pf) = full_state_linear_oracle(x_ref, &e_ref, p_x, &sys, n);
            let u_ref = -L * xf;
            let b = step_uncertain(x_unc, &e_unc, &sys, L, &UncertaintyModel::exact(), &table, n, 0.5, &g).unwrap();
            assert!((b.est.est.p_filt - pf).abs() < 1e-12 * pf);
            assert!((b.u - u_ref).abs() < 1e-4, "{} vs {u_ref}", b.u);
            x_ref = plant_step(x_ref, u_ref, *w, sys.lambda);
            x_unc = plant_step(x_unc, b.u, *w, sys.lambda);
            e_ref = EstimatorState {
                xhat_pred: sys.lambda * xf + u_ref,
                p_pred: sys.lambda * sys.lambda * pf + sys.sigma_w2,
                xhat_filt: xf,
                p_filt: pf,
            };
            p_ref = p_x;
            e_unc = b.est;
        }
    }

    #[test]
    fn sensor_power_never_below_prediction_mse() {
        let sys = fig3();
        let unc = UncertaintyModel::new(1.0 / 3.0, 3.0, 1.0, 1.0, ScalingMode::Randomized).unwrap();
        let state = UncertainEstimatorState {
            est: EstimatorState {
                xhat_pred: 0.0,
                p_pred: 4.0 * 0.1 + 1.0,
                xhat_filt: 0.0,
                p_filt: 0.1,
            },
            p_state: 1.4,
        };
        for k in 0..=20 {
            let p = sensor_state_power(&state, &sys, L, &unc, k as f64 / 20.0).unwrap();
            assert!(p >= state.est.p_pred - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn innovation_power_identities(p in 1e-3f64..1e3, sz in 1e-3f64..1e3) {
            let rho = si_correlation(p, sz);
            let pc = innovation_power(p, sz);
            let var = (1.0 - rho).powi(2) * p + rho * rho * sz;
            prop_assert!((var - pc).abs() <= 1e-12 * pc);
            prop_assert!((pc / sz - rho).abs() <= 1e-12);
        }

        #[test]
        fn linear_mse_closed_forms_agree(p in 1e-3f64..1e3, sz in 1e-3f64..1e3, snr in 1e-2f64..1e3) {
            let chain = parallel_sum_unchecked(parallel_sum_unchecked(p, sz), p / snr);
            let rho = si_correlation(p, sz);
            let alt = (1.0 - rho) * p / (1.0 + (1.0 - rho) * snr);
            prop_assert!((chain - alt).abs() <= 1e-12 * chain);
        }
    }
}
