//! Shared numerical primitives: modulo reduction, the parallel-sum operator,
//! Gaussian densities, trapezoid integration on a fixed grid, scalar
//! fixed-point iteration and the seeded random stream used by every Monte
//! Carlo routine in the crate.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `[x]_Δ = x − Δ·round(x/Δ)`, folding the real line onto `[−Δ/2, Δ/2]`.
///
/// Ties (`x/Δ` exactly half-integer) round away from zero. An infinite
/// `delta` leaves `x` untouched.
pub fn mod_reduce(x: f64, delta: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("mod_reduce: non-finite input {x}")));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid(format!("mod_reduce: delta must be positive, got {delta}")));
    }
    Ok(mod_reduce_unchecked(x, delta))
}

#[inline]
pub(crate) fn mod_reduce_unchecked(x: f64, delta: f64) -> f64 {
    if delta.is_infinite() {
        x
    } else {
        x - delta * (x / delta).round()
    }
}

/// `a ∥ b = ab / (a + b)`. Either argument may be `f64::INFINITY`, meaning
/// "no constraint": `a ∥ ∞ = a`.
pub fn parallel_sum(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a < 0.0 || b < 0.0 {
        return Err(Error::invalid(format!("parallel_sum: arguments must be nonnegative, got ({a}, {b})")));
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::invalid("parallel_sum: 0 ∥ 0 is undefined"));
    }
    Ok(parallel_sum_unchecked(a, b))
}

#[inline]
pub(crate) fn parallel_sum_unchecked(a: f64, b: f64) -> f64 {
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => f64::INFINITY,
        (true, false) => b,
        (false, true) => a,
        (false, false) => a * b / (a + b),
    }
}

/// Density of `N(0, variance)` at `x`.
#[inline]
pub fn gaussian_pdf(x: f64, variance: f64) -> f64 {
    (-0.5 * x * x / variance).exp() * INV_SQRT_2PI / variance.sqrt()
}

#[inline]
pub fn standard_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * INV_SQRT_2PI
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// Uniform integration grid over `[lo, hi]` with `n_points` abscissae
/// (both endpoints included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if n_points < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {n_points}")));
        }
        Ok(Self { lo, hi, n_points })
    }

    /// `[−8, 8]` with 4096 points, the default for unit-power Gaussian sources.
    pub fn standard() -> Self {
        Self {
            lo: -8.0,
            hi: 8.0,
            n_points: 4096,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::standard()
    }
}

/// Trapezoid rule for `f` over `grid`.
pub fn integrate_grid<F>(mut f: F, grid: &GridSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let last = grid.n_points() - 1;
    let mut acc = 0.0;
    for i in 0..grid.n_points() {
        let x = grid.point(i);
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::numerical(format!("integrand is {v} at x = {x}")));
        }
        acc += if i == 0 || i == last { 0.5 * v } else { v };
    }
    Ok(acc * grid.step())
}

/// Iterates `x ← map(x)` until `|map(x) − x| ≤ tol`.
///
/// Returns the first iterate meeting the tolerance; a non-finite iterate or
/// exhausting `max_iter` is a convergence failure.
pub fn fixed_point<F>(mut map: F, init: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("fixed_point: tolerance must be positive, got {tol}")));
    }
    let mut x = init;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = map(x);
        if !next.is_finite() {
            return Err(Error::ConvergenceFailure {
                iterations: max_iter,
                last: next,
                residual: f64::INFINITY,
            });
        }
        residual = (next - x).abs();
        x = next;
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
        last: x,
        residual,
    })
}

/// Seeded, counter-based source of standard-normal and uniform draws.
///
/// Backed by ChaCha20 with the stream index selecting an independent
/// keystream, so `(seed, index)` pins the full sequence regardless of how
/// work is distributed across threads. Normals come from the inverse CDF
/// of one uniform each, which keeps draw `k` a function of `k` alone.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    index: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { seed, index, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        standard_normal_quantile(u)
    }

    /// Zero-mean Gaussian draw with the given variance.
    pub fn normal(&mut self, variance: f64) -> f64 {
        self.standard_normal() * variance.sqrt()
    }
}

fn standard_normal_quantile(p: f64) -> f64 {
    thread_local! {
        static STANDARD: Normal = Normal::standard();
    }
    STANDARD.with(|n| n.inverse_cdf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::function::erf::erf;

    #[test]
    fn mod_reduce_examples() {
        assert_eq!(mod_reduce(0.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(mod_reduce(1.6, 3.0).unwrap(), -1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(mod_reduce(-4.2, 2.15).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn mod_reduce_ties_round_away_from_zero() {
        assert_abs_diff_eq!(mod_reduce(1.5, 3.0).unwrap(), -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mod_reduce(-1.5, 3.0).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn mod_reduce_rejects_bad_input() {
        assert!(matches!(mod_reduce(f64::NAN, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(mod_reduce(f64::INFINITY, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(mod_reduce(1.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(mod_reduce(1.0, -2.0), Err(Error::InvalidArgument(_))));
        assert_eq!(mod_reduce(0.7, f64::INFINITY).unwrap(), 0.7);
    }

    #[test]
    fn parallel_sum_examples() {
        assert_eq!(parallel_sum(1.0, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(parallel_sum(1.0, 1.0 / 9.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_eq!(parallel_sum(3.5, f64::INFINITY).unwrap(), 3.5);
        assert_eq!(parallel_sum(f64::INFINITY, 2.0).unwrap(), 2.0);
        assert!(matches!(parallel_sum(0.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(parallel_sum(-1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn integrate_grid_examples() {
        let g = GridSpec::new(0.0, 1.0, 2).unwrap();
        assert_eq!(integrate_grid(|_| 1.0, &g).unwrap(), 1.0);

        let g = GridSpec::new(0.0, 2.0, 101).unwrap();
        assert_abs_diff_eq!(integrate_grid(|x| x, &g).unwrap(), 2.0, epsilon = 1e-12);

        // erf oracle for the mass of N(0,1) on [-8, 8]
        let mass = erf(8.0 / std::f64::consts::SQRT_2);
        let got = integrate_grid(standard_normal_pdf, &GridSpec::standard()).unwrap();
        assert_abs_diff_eq!(got, mass, epsilon = 1e-6);
        assert_abs_diff_eq!(got, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn integrate_grid_reports_offending_abscissa() {
        let g = GridSpec::new(-1.0, 1.0, 3).unwrap();
        match integrate_grid(|x| 1.0 / x, &g) {
            Err(Error::NumericalFailure(msg)) => assert!(msg.contains("x = 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_rejects_degenerate_specs() {
        assert!(GridSpec::new(1.0, 1.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        assert!(GridSpec::new(f64::NEG_INFINITY, 1.0, 10).is_err());
    }

    #[test]
    fn fixed_point_examples() {
        let tol = 1e-12;
        let x = fixed_point(|x| x / 2.0 + 1.0, 0.0, tol, 1000).unwrap();
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-11);

        // root of s^2 - 8s - 5 = 0
        let oracle = (8.0 + 84f64.sqrt()) / 2.0;
        let s = fixed_point(|s| 4.0 * s / (s + 1.0) + 5.0, 1.0, tol, 1000).unwrap();
        assert_abs_diff_eq!(s, oracle, epsilon = 1e-10);

        match fixed_point(|x| 2.0 * x, 1.0, tol, 100) {
            Err(Error::ConvergenceFailure { last, residual, .. }) => {
                assert!(last > 1e29 && residual > 1e29);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn random_stream_is_reproducible() {
        let mut a = RandomStream::new(42, 7);
        let mut b = RandomStream::new(42, 7);
        let da: Vec<u64> = (0..10_000).map(|_| a.standard_normal().to_bits()).collect();
        let db: Vec<u64> = (0..10_000).map(|_| b.standard_normal().to_bits()).collect();
        assert_eq!(da, db);

        let mut c = RandomStream::new(42, 8);
        assert_ne!(da[0], c.standard_normal().to_bits());
    }

    #[test]
    fn random_stream_moments() {
        let mut s = RandomStream::new(1, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn mod_reduce_is_lattice_periodic(x in -50.0f64..50.0, delta in 0.1f64..10.0, k in -10i32..=10) {
            let base = mod_reduce(x, delta).unwrap();
            let shifted = mod_reduce(x + k as f64 * delta, delta).unwrap();
            // ties can flip between ±Δ/2 under rounding of x + kΔ
            let diff = (base - shifted).abs();
            prop_assert!(diff < 1e-9 * (1.0 + x.abs() + delta * 10.0) || (diff - delta).abs() < 1e-9 * (1.0 + delta));
            prop_assert!(base.abs() <= delta / 2.0 + 1e-12);
        }

        #[test]
        fn parallel_sum_is_associative(a in 1e-3f64..1e3, b in 1e-3f64..1e3, c in 1e-3f64..1e3) {
            let left = parallel_sum(parallel_sum(a, b).unwrap(), c).unwrap();
            let right = parallel_sum(a, parallel_sum(b, c).unwrap()).unwrap();
            prop_assert!((left - right).abs() <= 1e-12 * left);
        }

        #[test]
        fn parallel_sum_adds_reciprocals(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let p = parallel_sum(a, b).unwrap();
            let recip = 1.0 / a + 1.0 / b;
            prop_assert!((1.0 / p - recip).abs() <= 1e-12 * recip);
            prop_assert!(p <= a.min(b));
            prop_assert_eq!(p, parallel_sum(b, a).unwrap());
        }
    }
}
