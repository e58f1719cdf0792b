use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::numerics::fixed_point;
use crate::sysmodel::{AugmentedSpec, AugmentedWeights, LqrWeights};

const STEADY_TOL: f64 = 1e-13;
const MATRIX_STEADY_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100_000;

/// Backward scalar Riccati sweep over `t = 1..=T` plus its fixed point.
///
/// `s_seq[k]` weighs `X_{k+1}`, so `s_seq[T] = Q_{T+1}`; `l_seq[k]` is the
/// gain applied at `t = k + 1`, computed from `s_seq[k + 1]` with the
/// weights of time `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiScalar {
    pub s_seq: Vec<f64>,
    pub l_seq: Vec<f64>,
    pub s_inf: f64,
    pub l_inf: f64,
}

impl RiccatiScalar {
    /// Gain for time `t` (1-based).
    pub fn gain_at(&self, t: usize) -> f64 {
        self.l_seq[t.clamp(1, self.l_seq.len()) - 1]
    }
}

fn scalar_gain(lambda: f64, s: f64, r: f64) -> f64 {
    if s + r == 0.0 {
        0.0
    } else {
        lambda * s / (s + r)
    }
}

fn scalar_backward(lambda: f64, s: f64, q: f64, r: f64) -> f64 {
    let share = if s + r == 0.0 { 0.0 } else { r * s / (s + r) };
    lambda * lambda * share + q
}

pub fn riccati_scalar(lambda: f64, weights: &LqrWeights, horizon: usize) -> Result<RiccatiScalar> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    weights.validate()?;
    let mut s_seq = vec![0.0; horizon + 1];
    let mut l_seq = vec![0.0; horizon];
    s_seq[horizon] = weights.q.at(horizon + 1);
    for k in (0..horizon).rev() {
        let (q, r) = (weights.q.at(k + 2), weights.r.at(k + 2));
        l_seq[k] = scalar_gain(lambda, s_seq[k + 1], r);
        s_seq[k] = scalar_backward(lambda, s_seq[k + 1], q, r);
    }
    let (q, r) = (weights.q.at(horizon + 1), weights.r.at(horizon + 1));
    let s_inf = fixed_point(|s| scalar_backward(lambda, s, q, r), q, STEADY_TOL, MAX_ITER)?;
    Ok(RiccatiScalar {
        s_seq,
        l_seq,
        s_inf,
        l_inf: scalar_gain(lambda, s_inf, r),
    })
}

/// Backward sweep of the augmented LQR problem and its steady state.
/// Indexing follows [`RiccatiScalar`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiVector {
    pub s_seq: Vec<Matrix2<f64>>,
    pub l_seq: Vec<Vector2<f64>>,
    pub s_inf: Matrix2<f64>,
    pub l_inf: Vector2<f64>,
    /// Spectral radius of `A − B l_infᵀ`.
    pub closed_loop_radius: f64,
}

fn vector_gain(a: &Matrix2<f64>, b: &Vector2<f64>, s: &Matrix2<f64>, cost_u: f64) -> Vector2<f64> {
    let denom = (b.transpose() * s * b)[(0, 0)] + cost_u;
    if denom == 0.0 {
        return Vector2::zeros();
    }
    (a.transpose() * s * b) / denom
}

fn vector_backward(a: &Matrix2<f64>, b: &Vector2<f64>, s: &Matrix2<f64>, q: &Matrix2<f64>, cost_u: f64) -> Matrix2<f64> {
    let denom = (b.transpose() * s * b)[(0, 0)] + cost_u;
    let asb = a.transpose() * s * b;
    let correction = if denom == 0.0 {
        Matrix2::zeros()
    } else {
        asb * asb.transpose() / denom
    };
    let next = a.transpose() * s * a - correction + q;
    (next + next.transpose()) * 0.5
}

/// Largest eigenvalue modulus of a real 2×2 matrix.
pub fn spectral_radius(m: &Matrix2<f64>) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        (tr / 2.0 + root).abs().max((tr / 2.0 - root).abs())
    } else {
        det.sqrt()
    }
}

pub fn riccati_vector(spec: &AugmentedSpec, weights: &AugmentedWeights, horizon: usize) -> Result<RiccatiVector> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    weights.validate()?;
    let a = spec.a_matrix();
    let b = spec.b_vector();
    let mut s_seq = vec![Matrix2::zeros(); horizon + 1];
    let mut l_seq = vec![Vector2::zeros(); horizon];
    s_seq[horizon] = weights.q.at(horizon + 1);
    for k in (0..horizon).rev() {
        let (q, cu) = (weights.q.at(k + 2), weights.cost_u.at(k + 2));
        l_seq[k] = vector_gain(&a, &b, &s_seq[k + 1], cu);
        s_seq[k] = vector_backward(&a, &b, &s_seq[k + 1], &q, cu);
    }

    let (q, cu) = (weights.q.at(horizon + 1), weights.cost_u.at(horizon + 1));
    let mut s = q;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let next = vector_backward(&a, &b, &s, &q, cu);
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        residual = (next - s).abs().max();
        s = next;
        if residual <= MATRIX_STEADY_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            iterations: MAX_ITER,
            last: s[(0, 0)],
            residual,
        });
    }
    let l_inf = vector_gain(&a, &b, &s, cu);
    let closed_loop_radius = spectral_radius(&(a - b * l_inf.transpose()));
    Ok(RiccatiVector {
        s_seq,
        l_seq,
        s_inf: s,
        l_inf,
        closed_loop_radius,
    })
}
