//! Closed-form SDRs, steady-state estimation fixed points and the
//! steady-state cost bounds.

use crate::control::{innovation_power, riccati_scalar, si_correlation};
use crate::error::{Error, Result};
use crate::numerics::{fixed_point, parallel_sum_unchecked};
use crate::sysmodel::{LqrWeights, SystemSpec};

const STEADY_TOL: f64 = 1e-12;
const DAMPED_TOL: f64 = 1e-8;
const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 1_000_000;

/// Best SDR of one channel use without side information.
pub fn sdr_no_si(snr: f64) -> f64 {
    1.0 + snr
}

/// Best SDR when the SI is available at both ends. `p_z = ∞` drops the SI.
pub fn sdr_two_sided(p_x: f64, p_z: f64, snr: f64) -> f64 {
    (1.0 + p_x / p_z) * (1.0 + snr)
}

/// Distortion counterpart of [`sdr_two_sided`]: `(P_X ∥ P_Z)/(1 + SNR)`.
pub fn distortion_two_sided(p_x: f64, p_z: f64, snr: f64) -> f64 {
    parallel_sum_unchecked(p_x, p_z) / (1.0 + snr)
}

pub fn sdr_from_cube(sdr_cube: f64) -> f64 {
    1.0 + sdr_cube
}

pub fn sdr_cube_from_sdr(sdr: f64) -> f64 {
    sdr - 1.0
}

/// Limit of the two-sided estimation recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedSteadyState {
    pub p_pred_inf: f64,
    pub rho_inf: f64,
    /// `(1 + SNR)/(1 − ρ_∞)`.
    pub sdr_both_inf: f64,
}

/// Solves `P = λ² (σ_Z² ∥ P)/(1 + SNR) + σ_W²`.
pub fn steady_state_two_sided(sys: &SystemSpec) -> Result<TwoSidedSteadyState> {
    sys.validate()?;
    let lam2 = sys.lambda * sys.lambda;
    let map = |p: f64| lam2 * innovation_power(p, sys.sigma_z2) / (1.0 + sys.snr) + sys.sigma_w2;
    let p = fixed_point(map, sys.sigma_w2, STEADY_TOL, MAX_ITER)?;
    let rho = si_correlation(p, sys.sigma_z2);
    Ok(TwoSidedSteadyState {
        p_pred_inf: p,
        rho_inf: rho,
        sdr_both_inf: (1.0 + sys.snr) / (1.0 - rho),
    })
}

/// Joint fixed point of `P = λ² P/SDR(P/σ_Z²) + σ_W²` for a scheme whose
/// per-step SDR depends on the prediction-to-SI power ratio. Returns
/// `(P_∞, SDR_∞)`.
pub fn steady_state_sdr<F>(sys: &SystemSpec, sdr_of_ratio: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    sys.validate()?;
    let lam2 = sys.lambda * sys.lambda;
    let ratio = |p: f64| if sys.sigma_z2.is_infinite() { 0.0 } else { p / sys.sigma_z2 };
    let map = |p: f64| {
        let next = lam2 * p / sdr_of_ratio(ratio(p)) + sys.sigma_w2;
        (1.0 - DAMPING) * p + DAMPING * next
    };
    let p = fixed_point(map, sys.sigma_w2, DAMPED_TOL, MAX_ITER)?;
    Ok((p, sdr_of_ratio(ratio(p))))
}

/// Steady state of the linear receiver-SI scheme, where
/// `SDR = 1 + SNR + Pʳ/σ_Z²`.
pub fn steady_state_linear(sys: &SystemSpec) -> Result<(f64, f64)> {
    steady_state_sdr(sys, |ratio| 1.0 + sys.snr + ratio)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBounds {
    pub s: f64,
    pub l: f64,
    pub sdr_inf: f64,
    pub sdr_both_inf: f64,
    pub upper: f64,
    pub lower: f64,
}

fn bound(s: f64, q: f64, lam2: f64, sigma_w2: f64, sdr: f64) -> Result<f64> {
    if sdr <= lam2 {
        return Err(Error::InfeasibleRegime { sdr, lambda_sq: lam2 });
    }
    Ok(s * sigma_w2 + (q + (lam2 - 1.0) * s) * sigma_w2 / (sdr - lam2))
}

/// `J̄_∞ ≤ Sσ_W² + [Q + (λ² − 1)S] σ_W²/(SDR_∞ − λ²)`, and the same
/// expression with the two-sided SDR as the lower bound.
pub fn cost_bounds(sys: &SystemSpec, weights: &LqrWeights, sdr_inf: f64) -> Result<CostBounds> {
    let lam2 = sys.lambda * sys.lambda;
    let ric = riccati_scalar(sys.lambda, weights, sys.horizon)?;
    let q = weights.q.at(sys.horizon + 1);
    let two_sided = steady_state_two_sided(sys)?;
    let upper = bound(ric.s_inf, q, lam2, sys.sigma_w2, sdr_inf)?;
    let lower = bound(ric.s_inf, q, lam2, sys.sigma_w2, two_sided.sdr_both_inf)?;
    Ok(CostBounds {
        s: ric.s_inf,
        l: ric.l_inf,
        sdr_inf,
        sdr_both_inf: two_sided.sdr_both_inf,
        upper,
        lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jscc::{distortion_linear, SiChannelSpec};
    use proptest::prelude::*;

    fn fig3() -> SystemSpec {
        SystemSpec::new(2.0, 1.0, 0.125, 10f64.powf(0.6), 200).unwrap()
    }

    #[test]
    fn closed_form_sdrs() {
        assert_eq!(sdr_no_si(4.0), 5.0);
        assert!((sdr_no_si(1e-300) - 1.0).abs() < 1e-15);
        assert!((sdr_no_si(10f64.powf(0.6)) - 4.981_071_705_534_97).abs() < 1e-12);
        assert!((sdr_two_sided(1.0, 1.0 / 9.0, 4.0) - 50.0).abs() < 1e-12);
        assert_eq!(sdr_two_sided(1.0, f64::INFINITY, 4.0), 5.0);
        assert!((distortion_two_sided(1.0, 1.0 / 9.0, 4.0) - 0.02).abs() < 1e-15);
        let lin = SiChannelSpec::new(1.0, 1.0 / 9.0, 4.0).unwrap();
        assert!((1.0 / distortion_linear(&lin).unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn cube_round_trip() {
        assert_eq!(sdr_from_cube(0.0), 1.0);
        assert_eq!(sdr_from_cube(4.0), 5.0);
        for v in [0.0, 0.5, 3.0, 1e3] {
            assert_eq!(sdr_cube_from_sdr(sdr_from_cube(v)), v);
        }
    }

    #[test]
    fn memoryless_plant_steady_state() {
        let sys = SystemSpec::new(0.0, 1.7, 0.125, 4.0, 10).unwrap();
        assert_eq!(steady_state_two_sided(&sys).unwrap().p_pred_inf, 1.7);
    }

    #[test]
    fn no_si_steady_state() {
        let sys = SystemSpec::new(2.0, 1.0, f64::INFINITY, 4.0, 10).unwrap();
        let ss = steady_state_two_sided(&sys).unwrap();
        assert!((ss.p_pred_inf - 5.0).abs() < 1e-10);
        assert_eq!(ss.rho_inf, 0.0);
    }

    #[test]
    fn fig3_steady_state_matches_long_recursion() {
        let sys = fig3();
        let ss = steady_state_two_sided(&sys).unwrap();
        let mut p = sys.sigma_w2;
        for _ in 0..1_000_000 {
            p = 4.0 * (p * 0.125 / (p + 0.125)) / (1.0 + sys.snr) + 1.0;
        }
        assert!((ss.p_pred_inf - p).abs() < 1e-8);
        assert!((ss.rho_inf - p / (p + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn bounds_coincide_for_two_sided_sdr() {
        let sys = fig3();
        let w = LqrWeights::constant(5.0, 1.0).unwrap();
        let ss = steady_state_two_sided(&sys).unwrap();
        let b = cost_bounds(&sys, &w, ss.sdr_both_inf).unwrap();
        assert!((b.upper - b.lower).abs() < 1e-10);
    }

    #[test]
    fn upper_bound_plug_in() {
        let sys = fig3();
        let w = LqrWeights::constant(5.0, 1.0).unwrap();
        let s = (8.0 + 84f64.sqrt()) / 2.0;
        for sdr in [6.0, 10.0, 40.0] {
            let b = cost_bounds(&sys, &w, sdr).unwrap();
            assert!((b.upper - (s + (5.0 + 3.0 * s) / (sdr - 4.0))).abs() < 1e-9);
        }
        assert!((5.0 + 3.0 * s - 30.747_727).abs() < 1e-5);
    }

    #[test]
    fn boundary_sdr_is_infeasible() {
        let w = LqrWeights::constant(5.0, 1.0).unwrap();
        let r = cost_bounds(&fig3(), &w, 4.0);
        assert!(matches!(r, Err(Error::InfeasibleRegime { .. })));
    }

    #[test]
    fn linear_steady_state_is_a_fixed_point() {
        let sys = fig3();
        let (p, sdr) = steady_state_linear(&sys).unwrap();
        assert!((sdr - (1.0 + sys.snr + p / 0.125)).abs() < 1e-12);
        assert!((4.0 * p / sdr + 1.0 - p).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn two_sided_sdr_monotone(p_x in 0.1f64..10.0, p_z in 0.1f64..10.0, snr in 0.1f64..100.0, k in 1.01f64..3.0) {
            let base = sdr_two_sided(p_x, p_z, snr);
            prop_assert!(sdr_two_sided(p_x, p_z * k, snr) < base);
            prop_assert!(sdr_two_sided(p_x, p_z, snr * k) > base);
            prop_assert!(sdr_two_sided(p_x * k, p_z, snr) > base);
        }

        #[test]
        fn steady_prediction_monotone(sz in 0.05f64..5.0, snr in 0.5f64..50.0, k in 1.05f64..3.0) {
            let at = |sz: f64, snr: f64| {
                let sys = SystemSpec::new(2.0, 1.0, sz, snr, 10).unwrap();
                steady_state_two_sided(&sys).unwrap().p_pred_inf
            };
            let base = at(sz, snr);
            prop_assert!(at(sz * k, snr) > base);
            prop_assert!(at(sz, snr * k) < base);
        }
    }
}
