//! Plant, channels and cost accounting.
//!
//! Everything here is a pure function of its inputs. Noise samples are drawn
//! by the caller so that several schemes can be driven by the same draws.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Scalar plant `X_{t+1} = λX_t + W_t + U_t` observed over an AWGN channel
/// of the given SNR, with controller side information `Y_t = X_t + Z_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSpec {
    pub lambda: f64,
    pub sigma_w2: f64,
    /// `f64::INFINITY` models a useless SI channel.
    pub sigma_z2: f64,
    /// Linear, not dB.
    pub snr: f64,
    pub horizon: usize,
}

impl SystemSpec {
    pub fn new(lambda: f64, sigma_w2: f64, sigma_z2: f64, snr: f64, horizon: usize) -> Result<Self> {
        let spec = Self {
            lambda,
            sigma_w2,
            sigma_z2,
            snr,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite, got {}", self.lambda)));
        }
        if !(self.sigma_w2 > 0.0 && self.sigma_w2.is_finite()) {
            return Err(Error::invalid(format!("sigma_w2 must be positive, got {}", self.sigma_w2)));
        }
        if !(self.sigma_z2 > 0.0) {
            return Err(Error::invalid(format!("sigma_z2 must be positive, got {}", self.sigma_z2)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// A per-step quantity that is either constant or given for `t = 1, 2, …`.
/// Past the end of a per-step list the last entry is held.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    PerStep(Vec<T>),
}

impl<T: Copy> Schedule<T> {
    pub fn at(&self, t: usize) -> T {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PerStep(v) => {
                let i = t.clamp(1, v.len()) - 1;
                v[i]
            }
        }
    }

    pub fn constant(&self) -> Option<T> {
        match self {
            Schedule::Constant(v) => Some(*v),
            Schedule::PerStep(v) if v.len() == 1 => Some(v[0]),
            Schedule::PerStep(_) => None,
        }
    }
}

/// Scalar LQR weights: state weight `Q_t`, actuation weight `R_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: Schedule<f64>,
    pub r: Schedule<f64>,
}

impl LqrWeights {
    pub fn constant(q: f64, r: f64) -> Result<Self> {
        let w = Self {
            q: Schedule::Constant(q),
            r: Schedule::Constant(r),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: &Schedule<f64>| match s {
            Schedule::Constant(v) => *v >= 0.0 && v.is_finite(),
            Schedule::PerStep(v) => !v.is_empty() && v.iter().all(|x| *x >= 0.0 && x.is_finite()),
        };
        if !ok(&self.q) || !ok(&self.r) {
            return Err(Error::invalid("LQR weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Weights for the augmented (tracking) cost: 2×2 PSD state weight and the
/// scalar actuation weight `costU_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedWeights {
    pub q: Schedule<Matrix2<f64>>,
    pub cost_u: Schedule<f64>,
}

impl AugmentedWeights {
    pub fn constant(q: Matrix2<f64>, cost_u: f64) -> Result<Self> {
        let w = Self {
            q: Schedule::Constant(q),
            cost_u: Schedule::Constant(cost_u),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let psd = |m: &Matrix2<f64>| {
            let sym = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * (1.0 + m.abs().max());
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            sym && m[(0, 0)] >= 0.0 && m[(1, 1)] >= 0.0 && det >= -1e-12
        };
        let q_ok = match &self.q {
            Schedule::Constant(m) => psd(m),
            Schedule::PerStep(v) => !v.is_empty() && v.iter().all(psd),
        };
        let u_ok = match &self.cost_u {
            Schedule::Constant(v) => *v >= 0.0,
            Schedule::PerStep(v) => !v.is_empty() && v.iter().all(|x| *x >= 0.0),
        };
        if !q_ok || !u_ok {
            return Err(Error::invalid("augmented weights must be PSD / nonnegative"));
        }
        Ok(())
    }
}

/// Plant augmented with the accumulated tracking error `η_t`:
/// `𝑿_{t+1} = A𝑿_t + B U_t + (W_t, 0) + (0, R_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSpec {
    pub lambda: f64,
    pub reference: Schedule<f64>,
}

impl AugmentedSpec {
    pub fn new(lambda: f64, reference: Schedule<f64>) -> Self {
        Self { lambda, reference }
    }

    pub fn a_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.lambda, 0.0, -1.0, 1.0)
    }

    pub fn b_vector(&self) -> Vector2<f64> {
        Vector2::new(1.0, 0.0)
    }

    /// `R_t`; the reference is indexed from `t = 0`.
    pub fn reference_at(&self, t: usize) -> f64 {
        self.reference.at(t + 1)
    }

    /// `(X_0, η_0) = (0, R_0)`.
    pub fn initial_state(&self) -> Vector2<f64> {
        Vector2::new(0.0, self.reference_at(0))
    }
}

#[inline]
pub fn plant_step(x: f64, u: f64, w: f64, lambda: f64) -> f64 {
    lambda * x + w + u
}

/// `B = A + N`; `noise` has variance `1/SNR`.
#[inline]
pub fn channel_transmit(a: f64, noise: f64) -> f64 {
    a + noise
}

/// `Y = X + Z`; `noise` has variance `σ_Z²`.
#[inline]
pub fn si_observe(x: f64, noise: f64) -> f64 {
    x + noise
}

/// Row-wise evaluation of `A𝑿 + B u + (w, r_t)` with `A = [[λ, 0], [−1, 1]]`,
/// `B = (1, 0)`.
pub fn augmented_step(xv: &Vector2<f64>, u: f64, w: f64, r_t: f64, spec: &AugmentedSpec) -> Vector2<f64> {
    Vector2::new(plant_step(xv[0], u, w, spec.lambda), xv[1] + r_t - xv[0])
}

#[inline]
pub fn stage_cost(x: f64, u: f64, q: f64, r: f64) -> f64 {
    q * x * x + r * u * u
}

#[inline]
pub fn terminal_cost(x: f64, q: f64) -> f64 {
    q * x * x
}

pub fn stage_cost_vector(xv: &Vector2<f64>, u: f64, q: &Matrix2<f64>, cost_u: f64) -> f64 {
    (xv.transpose() * q * xv)[(0, 0)] + cost_u * u * u
}

pub fn terminal_cost_vector(xv: &Vector2<f64>, q: &Matrix2<f64>) -> f64 {
    (xv.transpose() * q * xv)[(0, 0)]
}
