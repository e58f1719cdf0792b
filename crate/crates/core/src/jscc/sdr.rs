//! SDR estimation for the modulo pipeline, the interpolated SDR table used
//! by the control loops, and the `(α, β, Δ)` grid search.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{decode_modulo_mmse, ModuloParams, SiChannelSpec};
use crate::error::{Error, Result};
use crate::numerics::{GridSpec, RandomStream};

/// Smallest sample count accepted by [`estimate_sdr`].
pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdrMethod {
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdrEstimate {
    pub sdr: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub method: SdrMethod,
}

impl SdrEstimate {
    fn closed_form(sdr: f64) -> Self {
        Self {
            sdr,
            std_err: 0.0,
            n_samples: 0,
            method: SdrMethod::ClosedForm,
        }
    }

    pub fn db(&self) -> f64 {
        10.0 * self.sdr.log10()
    }

    /// First-order standard error of [`Self::db`].
    pub fn db_std_err(&self) -> f64 {
        10.0 / std::f64::consts::LN_10 * self.std_err / self.sdr
    }
}

/// Exact SDR of a linear (`Δ = ∞`) encoder `x̄ ↦ βx̄` fed with `c·x̄`, where
/// `ratio = P_X/P_Z`. `None` for genuinely modulo parameters.
pub fn sdr_closed_form(params: &ModuloParams, ratio: f64, snr: f64, input_scale: f64) -> Option<f64> {
    params.is_linear().then(|| {
        let gain = params.beta * input_scale;
        1.0 + gain * gain * snr + ratio
    })
}

/// Monte Carlo SDR of `params` over `spec`, decoding every sample with
/// the exact posterior mean.
///
/// The problem is rescaled to `p_x = 1` first; only `p_x/p_z` and `snr`
/// matter. Each sample draws the source, the SI noise and the channel
/// noise from `stream` in that order.
pub fn estimate_sdr(
    params: &ModuloParams,
    spec: &SiChannelSpec,
    n_samples: usize,
    stream: &mut RandomStream,
    grid: &GridSpec,
) -> Result<SdrEstimate> {
    spec.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let canon = SiChannelSpec {
        p_x: 1.0,
        p_z: spec.p_z / spec.p_x,
        snr: spec.snr,
    };
    let noise_var = canon.snr.recip();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let x = stream.standard_normal();
        let z = stream.normal(canon.p_z);
        let n = stream.normal(noise_var);
        let b = params.encode(x) + n;
        let y = x + z;
        let x_hat = if params.is_linear() {
            linear_posterior_mean(params.beta, b, y, &canon)
        } else {
            decode_modulo_mmse(b, y, 0.0, 1.0, params, &canon, grid)?
        };
        let e2 = (x - x_hat) * (x - x_hat);
        sum += e2;
        sum_sq += e2 * e2;
    }
    let n = n_samples as f64;
    let mse = sum / n;
    if !(mse > 0.0 && mse.is_finite()) {
        return Err(Error::numerical(format!("degenerate sample distortion {mse}")));
    }
    let var = (sum_sq / n - mse * mse).max(0.0) * n / (n - 1.0);
    let mse_se = (var / n).sqrt();
    Ok(SdrEstimate {
        sdr: mse.recip(),
        std_err: mse_se / (mse * mse),
        n_samples,
        method: SdrMethod::MonteCarlo,
    })
}

// Posterior mean of a unit-power source seen through `b = βx + N` and `y = x + Z`.
fn linear_posterior_mean(beta: f64, b: f64, y: f64, canon: &SiChannelSpec) -> f64 {
    let si = if canon.p_z.is_infinite() { 0.0 } else { canon.p_z.recip() };
    (beta * canon.snr * b + si * y) / (1.0 + beta * beta * canon.snr + si)
}

/// Node placement of an [`SdrTable`]: source-to-SI power ratios and
/// encoder input scales, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct TableAxes {
    pub ratios: Vec<f64>,
    pub scales: Vec<f64>,
}

impl TableAxes {
    pub fn new(ratios: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("ratio", &ratios), ("scale", &scales)] {
            if axis.is_empty() {
                return Err(Error::invalid(format!("{name} axis is empty")));
            }
            if axis.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("{name} axis must be positive and finite")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("{name} axis must be strictly increasing")));
            }
        }
        Ok(Self { ratios, scales })
    }

    /// Log-spaced ratios with the single input scale 1.
    pub fn ratios_only(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(log_space(lo, hi, n)?, vec![1.0])
    }

    pub fn geometric(r_lo: f64, r_hi: f64, n_r: usize, s_lo: f64, s_hi: f64, n_s: usize) -> Result<Self> {
        Self::new(log_space(r_lo, r_hi, n_r)?, log_space(s_lo, s_hi, n_s)?)
    }

    pub fn len(&self) -> usize {
        self.ratios.len() * self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 || (n == 1 && hi != lo) {
        return Err(Error::invalid(format!("bad log-spaced axis [{lo}, {hi}] with {n} nodes")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

#[derive(Debug, Clone)]
enum TableKind {
    ClosedForm,
    Grid {
        log_ratios: Vec<f64>,
        log_scales: Vec<f64>,
        // Row-major over (ratio, scale).
        log_sdr: Vec<f64>,
    },
}

/// `SDR(ratio, c)` of a fixed encoder at a fixed SNR, where `ratio` is the
/// source-to-SI power ratio and `c ≤ 1` the factor by which the sensor's
/// normalization undershoots the source's unit scale.
///
/// Grid tables interpolate bilinearly in log–log coordinates and clamp to
/// the axes. Linear encoders are evaluated exactly.
#[derive(Debug, Clone)]
pub struct SdrTable {
    params: ModuloParams,
    snr: f64,
    kind: TableKind,
}

impl SdrTable {
    pub fn closed_form(params: ModuloParams, snr: f64) -> Result<Self> {
        if !params.is_linear() {
            return Err(Error::invalid("closed-form SDR tables need a linear encoder"));
        }
        Ok(Self {
            params,
            snr,
            kind: TableKind::ClosedForm,
        })
    }

    /// Estimates every node with `n_samples` draws; node `k` (row-major)
    /// uses stream `(seed, k)`, so the table does not depend on how many
    /// threads build it.
    pub fn build(
        params: ModuloParams,
        snr: f64,
        axes: &TableAxes,
        n_samples: usize,
        seed: u64,
        grid: &GridSpec,
    ) -> Result<Self> {
        if params.is_linear() {
            return Self::closed_form(params, snr);
        }
        let nodes: Vec<(f64, f64)> = axes
            .ratios
            .iter()
            .flat_map(|&r| axes.scales.iter().map(move |&c| (r, c)))
            .collect();
        let log_sdr = nodes
            .par_iter()
            .enumerate()
            .map(|(k, &(ratio, c))| {
                let spec = SiChannelSpec::new(1.0, ratio.recip(), snr)?;
                let mut stream = RandomStream::new(seed, k as u64);
                let est = estimate_sdr(&params.with_input_scale(c), &spec, n_samples, &mut stream, grid)?;
                Ok(est.sdr.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            params,
            snr,
            kind: TableKind::Grid {
                log_ratios: axes.ratios.iter().map(|r| r.ln()).collect(),
                log_scales: axes.scales.iter().map(|c| c.ln()).collect(),
                log_sdr,
            },
        })
    }

    pub fn params(&self) -> &ModuloParams {
        &self.params
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn sdr(&self, ratio: f64, scale: f64) -> f64 {
        match &self.kind {
            TableKind::ClosedForm => 1.0 + self.params.beta.powi(2) * scale * scale * self.snr + ratio,
            TableKind::Grid {
                log_ratios,
                log_scales,
                log_sdr,
            } => {
                let (i, fi) = bracket(log_ratios, ratio.ln());
                let (j, fj) = bracket(log_scales, scale.ln());
                let ns = log_scales.len();
                let at = |a: usize, b: usize| log_sdr[a * ns + b];
                let i1 = (i + 1).min(log_ratios.len() - 1);
                let j1 = (j + 1).min(ns - 1);
                let lo = at(i, j) * (1.0 - fj) + at(i, j1) * fj;
                let hi = at(i1, j) * (1.0 - fj) + at(i1, j1) * fj;
                (lo * (1.0 - fi) + hi * fi).exp()
            }
        }
    }
}

// Index of the left node and the fractional position within its cell,
// clamped to the axis.
fn bracket(axis: &[f64], v: f64) -> (usize, f64) {
    let last = axis.len() - 1;
    if last == 0 || v <= axis[0] {
        return (0, 0.0);
    }
    if v >= axis[last] {
        return (last, 0.0);
    }
    let i = axis.partition_point(|&a| a <= v) - 1;
    (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
}

/// Memo of SDR estimates keyed by `(p_x/p_z, snr, α, β, Δ)`.
///
/// The stream behind each entry is derived from the key, so results do
/// not depend on the order in which entries are requested.
#[derive(Debug, Default)]
pub struct SdrCache {
    seed: u64,
    entries: HashMap<[u64; 5], SdrEstimate>,
}

impl SdrCache {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_estimate(
        &mut self,
        params: &ModuloParams,
        spec: &SiChannelSpec,
        n_samples: usize,
        grid: &GridSpec,
    ) -> Result<SdrEstimate> {
        let key = [
            (spec.p_x / spec.p_z).to_bits(),
            spec.snr.to_bits(),
            params.alpha.to_bits(),
            params.beta.to_bits(),
            params.delta.to_bits(),
        ];
        if let Some(hit) = self.entries.get(&key) {
            return Ok(*hit);
        }
        let mut stream = RandomStream::new(self.seed, mix_key(&key));
        let est = estimate_sdr(params, spec, n_samples, &mut stream, grid)?;
        self.entries.insert(key, est);
        Ok(est)
    }
}

// FNV-1a over the key words; only needs to be stable, not strong.
fn mix_key(key: &[u64; 5]) -> u64 {
    key.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, w| {
        w.to_le_bytes()
            .iter()
            .fold(h, |h, &byte| (h ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3))
    })
}

/// Candidate values for the grid search in [`optimize_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Best power-feasible triple on the Cartesian product of `search`.
///
/// Every candidate is scored against the same draws (a fresh copy of
/// `stream`), and linear candidates are scored in closed form. Ties go
/// to the smaller `Δ`, then `|β|`, then `|α|`.
pub fn optimize_params(
    spec: &SiChannelSpec,
    search: &SearchGrid,
    n_samples: usize,
    stream: &RandomStream,
    grid: &GridSpec,
) -> Result<(ModuloParams, SdrEstimate)> {
    spec.validate()?;
    if search.alphas.is_empty() || search.betas.is_empty() || search.deltas.is_empty() {
        return Err(Error::invalid("search grids must be non-empty"));
    }
    let mut candidates = Vec::new();
    for &delta in &search.deltas {
        for &beta in &search.betas {
            for &alpha in &search.alphas {
                let p = ModuloParams::new(alpha, beta, delta)?;
                if p.is_power_feasible(grid)? {
                    candidates.push(p);
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::InfeasibleSearch(format!(
            "{} candidate triples, all with E[A^2] > 1",
            search.alphas.len() * search.betas.len() * search.deltas.len()
        )));
    }
    let ratio = spec.p_x / spec.p_z;
    let scored = candidates
        .par_iter()
        .map(|p| match sdr_closed_form(p, ratio, spec.snr, 1.0) {
            Some(sdr) => Ok((*p, SdrEstimate::closed_form(sdr))),
            None => {
                let mut s = RandomStream::new(stream.seed(), stream.index());
                Ok((*p, estimate_sdr(p, spec, n_samples, &mut s, grid)?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let best = scored
        .into_iter()
        .reduce(|best, cand| if beats(&cand, &best) { cand } else { best })
        .expect("at least one candidate");
    Ok(best)
}

fn beats(a: &(ModuloParams, SdrEstimate), b: &(ModuloParams, SdrEstimate)) -> bool {
    let key = |(p, e): &(ModuloParams, SdrEstimate)| (-e.sdr, p.delta, p.beta.abs(), p.alpha.abs());
    key(a).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less)
}
