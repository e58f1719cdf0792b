//! Monte Carlo ensembles of the closed-loop schemes.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::config::{Encoder, ExperimentConfig, SchemeId};
use super::table::ResultTable;
use super::{mean_and_se, table_axes, ExperimentOutput, TABLE_SEED_SALT};
use crate::analysis::{cost_bounds, steady_state_linear, steady_state_sdr, steady_state_two_sided};
use crate::control::{
    riccati_scalar, riccati_vector, step_linear_si, step_modulo_si, step_tracking, step_tracking_two_sided,
    step_two_sided, step_uncertain, AugmentedEstimatorState, BandDraw, EstimatorState, ScalingMode, StepNoise,
    UncertainEstimatorState, UncertaintyModel,
};
use crate::error::{Error, Result};
use crate::jscc::{ModuloParams, SdrTable};
use crate::numerics::{GridSpec, RandomStream};
use crate::sysmodel::{
    augmented_step, plant_step, stage_cost, stage_cost_vector, AugmentedSpec, AugmentedWeights, Schedule, SystemSpec,
};

/// Empirical `E[A_t²]` bound of the power audit.
pub const POWER_LIMIT: f64 = 1.02;

/// All random inputs of one run, indexed by `t = 0..=T`. Every scheme of an
/// experiment replays the same trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub w: Vec<f64>,
    pub n: Vec<f64>,
    pub z: Vec<f64>,
    /// Uniform variates selecting the sensor's assumed gain.
    pub gain_draw: Vec<f64>,
    /// Uniform variates selecting the sensor's assumed reference.
    pub ref_draw: Vec<f64>,
}

impl NoiseTrace {
    /// Draws from stream `(seed, run)` in the order `W, N, Z, gain, ref`
    /// per step.
    pub fn draw(sys: &SystemSpec, seed: u64, run: u64) -> Self {
        let mut s = RandomStream::new(seed, run);
        let mut trace = Self::zero(sys.horizon);
        for t in 0..=sys.horizon {
            trace.w[t] = s.normal(sys.sigma_w2);
            trace.n[t] = s.normal(sys.snr.recip());
            let z = s.standard_normal();
            trace.z[t] = if sys.sigma_z2.is_finite() { z * sys.sigma_z2.sqrt() } else { 0.0 };
            trace.gain_draw[t] = s.uniform();
            trace.ref_draw[t] = s.uniform();
        }
        trace
    }

    /// Noise-free trace; the band draws sit at the middle of the band.
    pub fn zero(horizon: usize) -> Self {
        Self {
            w: vec![0.0; horizon + 1],
            n: vec![0.0; horizon + 1],
            z: vec![0.0; horizon + 1],
            gain_draw: vec![0.5; horizon + 1],
            ref_draw: vec![0.5; horizon + 1],
        }
    }

    /// FNV-1a hash of every draw, for checking common random numbers.
    pub fn fingerprint(&self) -> u64 {
        [&self.w, &self.n, &self.z, &self.gain_draw, &self.ref_draw]
            .iter()
            .flat_map(|v| v.iter())
            .flat_map(|x| x.to_bits().to_le_bytes())
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

/// Per-step trace of one run; entry `t − 1` holds time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub x: Vec<f64>,
    /// Integrator state; empty for regulation.
    pub eta: Vec<f64>,
    pub a: Vec<f64>,
    /// Filtered estimate `X̂ʳ_{t|t}`.
    pub xhat: Vec<f64>,
    pub u: Vec<f64>,
    /// Stage cost; the state part only when tracking.
    pub cost: Vec<f64>,
    /// Recursion value of `Pʳ_{t|t}`.
    pub p_filt: Vec<f64>,
    /// Model value of `E[X_t²]` where the scheme propagates one, else NaN.
    pub model_power: Vec<f64>,
    /// Model mean and covariance of `(X_t, η_t)` when tracking.
    pub moments: Vec<(Vector2<f64>, Matrix2<f64>)>,
    pub noise_fingerprint: u64,
}

impl RunRecord {
    fn with_capacity(horizon: usize, fingerprint: u64) -> Self {
        let v = || Vec::with_capacity(horizon);
        Self {
            x: v(),
            eta: v(),
            a: v(),
            xhat: v(),
            u: v(),
            cost: v(),
            p_filt: v(),
            model_power: v(),
            moments: Vec::new(),
            noise_fingerprint: fingerprint,
        }
    }
}

struct Tracking {
    spec: AugmentedSpec,
    gain: Vector2<f64>,
    q: Matrix2<f64>,
}

/// Everything a run needs besides its noise trace, shared by all runs.
pub struct ControlContext {
    sys: SystemSpec,
    q: f64,
    r: f64,
    gain: f64,
    tracking: Option<Tracking>,
    linear_table: SdrTable,
    modulo_table: Option<SdrTable>,
    bands: Option<super::config::Bands>,
    grid: GridSpec,
}

impl ControlContext {
    /// Builds the gains and, if a modulo scheme is configured, the SDR
    /// table of the power-normalized modulo triple.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let sys = *cfg.system()?;
        let q = cfg.weights.q.at(1);
        let r = cfg.weights.r.at(1);
        let gain = riccati_scalar(sys.lambda, &cfg.weights, sys.horizon)?.l_inf;
        let tracking = match cfg.ref_level {
            Some(level) => {
                let spec = AugmentedSpec::new(sys.lambda, Schedule::Constant(level));
                let qm = Matrix2::new(q, 0.0, 0.0, cfg.q_eta);
                let ric = riccati_vector(&spec, &AugmentedWeights::constant(qm, r)?, sys.horizon)?;
                if ric.closed_loop_radius >= 1.0 {
                    return Err(Error::numerical(format!(
                        "tracking gain does not stabilize the loop (radius {})",
                        ric.closed_loop_radius
                    )));
                }
                Some(Tracking {
                    spec,
                    gain: ric.l_inf,
                    q: qm,
                })
            }
            None => None,
        };
        let needs_modulo = cfg
            .schemes
            .iter()
            .any(|s| matches!(s, SchemeId::Modulo | SchemeId::Band(Encoder::Modulo, _)));
        let modulo_table = if needs_modulo {
            Some(build_table(cfg, &sys)?)
        } else {
            None
        };
        Ok(Self {
            sys,
            q,
            r,
            gain,
            tracking,
            linear_table: SdrTable::closed_form(ModuloParams::linear(), sys.snr)?,
            modulo_table,
            bands: cfg.uncertainty,
            grid: cfg.grid,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn modulo_table(&self) -> Option<&SdrTable> {
        self.modulo_table.as_ref()
    }

    fn table(&self, enc: Encoder) -> Result<&SdrTable> {
        match enc {
            Encoder::Linear => Ok(&self.linear_table),
            Encoder::Modulo => self
                .modulo_table
                .as_ref()
                .ok_or_else(|| Error::Config("modulo table was not built".into())),
        }
    }

    fn model(&self, mode: ScalingMode) -> Result<UncertaintyModel> {
        self.bands
            .ok_or_else(|| Error::Config("band schemes need uncertainty.* keys".into()))?
            .model(mode)
    }

    pub fn simulate(&self, scheme: SchemeId, trace: &NoiseTrace) -> Result<RunRecord> {
        match &self.tracking {
            Some(tr) => self.simulate_tracking(scheme, tr, trace),
            None => self.simulate_regulation(scheme, trace),
        }
    }

    fn simulate_regulation(&self, scheme: SchemeId, trace: &NoiseTrace) -> Result<RunRecord> {
        let sys = &self.sys;
        let mut rec = RunRecord::with_capacity(sys.horizon, trace.fingerprint());
        let mut est = EstimatorState::initial(sys.sigma_w2);
        let mut band = UncertainEstimatorState::initial(sys.sigma_w2);
        let band_setup = match scheme {
            SchemeId::Band(enc, mode) => Some((self.table(enc)?, self.model(mode)?)),
            _ => None,
        };
        let mut x = plant_step(0.0, 0.0, trace.w[0], sys.lambda);
        for t in 1..=sys.horizon {
            let noise = StepNoise {
                n: trace.n[t],
                z: trace.z[t],
            };
            let (a, u, p, power) = match (scheme, band_setup.as_ref()) {
                (SchemeId::Band(..), Some((table, unc))) => {
                    let out = step_uncertain(x, &band, sys, self.gain, unc, table, &noise, trace.gain_draw[t], &self.grid)?;
                    band = out.est;
                    est = band.est;
                    (out.a, out.u, est.p_filt, band.p_state)
                }
                _ => {
                    let out = match scheme {
                        SchemeId::TwoSided => step_two_sided(x, &est, sys, self.gain, &noise),
                        SchemeId::Linear => step_linear_si(x, &est, sys, self.gain, &noise),
                        _ => step_modulo_si(x, &est, sys, self.gain, self.table(Encoder::Modulo)?, &noise, &self.grid)?,
                    };
                    est = out.est;
                    (out.a, out.u, est.p_filt, f64::NAN)
                }
            };
            rec.x.push(x);
            rec.a.push(a);
            rec.xhat.push(est.xhat_filt);
            rec.u.push(u);
            rec.cost.push(stage_cost(x, u, self.q, self.r));
            rec.p_filt.push(p);
            rec.model_power.push(power);
            x = plant_step(x, u, trace.w[t], sys.lambda);
        }
        Ok(rec)
    }

    fn simulate_tracking(&self, scheme: SchemeId, tr: &Tracking, trace: &NoiseTrace) -> Result<RunRecord> {
        let sys = &self.sys;
        let mut rec = RunRecord::with_capacity(sys.horizon, trace.fingerprint());
        let band_setup = match scheme {
            SchemeId::TwoSided => None,
            SchemeId::Band(enc, mode) => Some((self.table(enc)?, self.model(mode)?)),
            other => return Err(Error::Config(format!("scheme {other} cannot track a reference"))),
        };
        let (mut state, u0) = AugmentedEstimatorState::initial(&tr.spec, &tr.gain, sys.sigma_w2);
        let mut xv = augmented_step(&tr.spec.initial_state(), u0, trace.w[0], tr.spec.reference_at(0), &tr.spec);
        for t in 1..=sys.horizon {
            let noise = StepNoise {
                n: trace.n[t],
                z: trace.z[t],
            };
            let out = match band_setup.as_ref() {
                None => step_tracking_two_sided(&xv, &state, sys, &tr.spec, t, &tr.gain, &noise)?,
                Some((table, unc)) => {
                    let draw = BandDraw {
                        gain: trace.gain_draw[t],
                        reference: trace.ref_draw[t],
                    };
                    step_tracking(&xv, &state, sys, &tr.spec, t, &tr.gain, unc, table, &noise, &draw, &self.grid)?
                }
            };
            state = out.est;
            rec.x.push(xv[0]);
            rec.eta.push(xv[1]);
            rec.a.push(out.a);
            rec.xhat.push(state.xhat_filt);
            rec.u.push(out.u);
            rec.cost.push(stage_cost_vector(&xv, 0.0, &tr.q, 0.0));
            rec.p_filt.push(state.p_filt);
            rec.model_power.push(state.mean[0].powi(2) + state.cov[(0, 0)]);
            rec.moments.push((state.mean, state.cov));
            xv = augmented_step(&xv, out.u, trace.w[t], tr.spec.reference_at(t), &tr.spec);
        }
        Ok(rec)
    }
}

fn build_table(cfg: &ExperimentConfig, sys: &SystemSpec) -> Result<SdrTable> {
    let (params, _) = cfg.transmit_params(&cfg.modulo)?;
    SdrTable::build(
        params,
        sys.snr,
        &table_axes(&cfg.table)?,
        cfg.table.samples,
        cfg.base_seed ^ TABLE_SEED_SALT,
        &cfg.grid,
    )
}

/// Records of every run, `records[run][scheme]` with schemes in config order.
pub struct Ensemble {
    pub schemes: Vec<SchemeId>,
    pub records: Vec<Vec<RunRecord>>,
}

/// Runs every configured scheme on `cfg.runs` noise traces. Run `k` uses
/// stream `(base_seed, k)`; results do not depend on the thread count.
pub fn simulate_ensemble(cfg: &ExperimentConfig, ctx: &ControlContext) -> Result<Ensemble> {
    let sys = ctx.system();
    let records = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|k| {
            let trace = if cfg.zero_noise {
                NoiseTrace::zero(sys.horizon)
            } else {
                NoiseTrace::draw(sys, cfg.base_seed, k)
            };
            cfg.schemes.iter().map(|&s| ctx.simulate(s, &trace)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        schemes: cfg.schemes.clone(),
        records,
    })
}

/// Number of final steps averaged into the steady-state statistics.
pub fn steady_window(horizon: usize, fraction: f64) -> usize {
    ((horizon as f64 * fraction).round() as usize).clamp(1, horizon)
}

fn tail_mean(v: &[f64], m: usize) -> f64 {
    v[v.len() - m..].iter().sum::<f64>() / m as f64
}

/// Per-step and steady-state statistics, power audits and (for
/// regulation without bands) the steady-state cost bounds.
pub fn summarize(cfg: &ExperimentConfig, ctx: &ControlContext, ens: &Ensemble) -> Result<ExperimentOutput> {
    let sys = ctx.system();
    let horizon = sys.horizon;
    let runs = ens.records.len();
    let n = runs as u64;
    let m = steady_window(horizon, cfg.steady_fraction);
    let mut table = ResultTable::new();
    let mut findings = Vec::new();
    let column = |s: usize, f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> { ens.records.iter().map(|r| f(&r[s])).collect() };

    for t in 1..=horizon {
        let key = t.to_string();
        let i = t - 1;
        for (s, scheme) in ens.schemes.iter().enumerate() {
            let name = scheme.name();
            let mut put = |stat: &str, xs: Vec<f64>| {
                let (mean, se) = mean_and_se(&xs);
                table.push(key.as_str(), name, stat, mean, se, n)
            };
            put("cost", column(s, &|r| r.cost[i]))?;
            put("running_cost", column(s, &|r| r.cost[..=i].iter().sum::<f64>() / t as f64))?;
            put("power", column(s, &|r| r.a[i] * r.a[i]))?;
            put("mse_theory", column(s, &|r| r.p_filt[i]))?;
            put("mse_empirical", column(s, &|r| (r.x[i] - r.xhat[i]).powi(2)))?;
            put("state_mean", column(s, &|r| r.x[i]))?;
            put("state_power", column(s, &|r| r.x[i] * r.x[i]))?;
            if ens.records[0][s].model_power[i].is_finite() {
                put("state_power_model", column(s, &|r| r.model_power[i]))?;
            }
        }
    }

    let steady: Vec<Vec<f64>> = (0..ens.schemes.len()).map(|s| column(s, &|r| tail_mean(&r.cost, m))).collect();
    for (s, scheme) in ens.schemes.iter().enumerate() {
        let name = scheme.name();
        let (mean, se) = mean_and_se(&steady[s]);
        table.push("steady", name, "cost", mean, se, n)?;
        let (mean, se) = mean_and_se(&column(s, &|r| tail_mean(&r.x, m)));
        table.push("steady", name, "state_mean", mean, se, n)?;
        let (mean, se) = mean_and_se(&column(s, &|r| tail_mean(&r.a.iter().map(|a| a * a).collect::<Vec<_>>(), m)));
        table.push("steady", name, "power", mean, se, n)?;
        for (o, other) in ens.schemes.iter().enumerate().skip(s + 1) {
            let diff: Vec<f64> = steady[s].iter().zip(&steady[o]).map(|(a, b)| a - b).collect();
            let (mean, se) = mean_and_se(&diff);
            table.push("steady", name, format!("cost_minus_{}", other.name()), mean, se, n)?;
        }
    }

    for (s, scheme) in ens.schemes.iter().enumerate() {
        let name = scheme.name();
        let avg = column(s, &|r| r.a.iter().map(|a| a * a).sum::<f64>() / horizon as f64);
        let (avg_mean, avg_se) = mean_and_se(&avg);
        table.push("audit", name, "avg_power", avg_mean, avg_se, n)?;
        let (mut max_mean, mut max_se, mut exceed) = (f64::NEG_INFINITY, 0.0, 0usize);
        for i in 0..horizon {
            let (mean, se) = mean_and_se(&column(s, &|r| r.a[i] * r.a[i]));
            if mean > max_mean {
                (max_mean, max_se) = (mean, se);
            }
            // A step fails only if it is significantly above the limit.
            if mean - 3.0 * se > POWER_LIMIT {
                exceed += 1;
            }
        }
        table.push("audit", name, "max_step_power", max_mean, max_se, n)?;
        table.push("audit", name, "steps_over_limit", exceed as f64, 0.0, n)?;
        let per_step = matches!(scheme, SchemeId::Band(_, ScalingMode::WorstCase));
        let pass = avg_mean <= POWER_LIMIT && (!per_step || exceed == 0);
        table.push("audit", name, "pass", if pass { 1.0 } else { 0.0 }, 0.0, n)?;
        if !pass {
            findings.push(format!(
                "{name}: power audit failed (average {avg_mean:.4}, {exceed} steps significantly above {POWER_LIMIT})"
            ));
        }
    }

    if ctx.tracking.is_none() && cfg.uncertainty.is_none() {
        bound_rows(cfg, ctx, &mut table)?;
    }
    Ok(ExperimentOutput { table, findings })
}

fn bound_rows(cfg: &ExperimentConfig, ctx: &ControlContext, table: &mut ResultTable) -> Result<()> {
    let sys = ctx.system();
    for scheme in &cfg.schemes {
        let sdr = match scheme {
            SchemeId::TwoSided => steady_state_two_sided(sys)?.sdr_both_inf,
            SchemeId::Linear => steady_state_linear(sys)?.1,
            SchemeId::Modulo => match ctx.modulo_table() {
                Some(tab) => steady_state_sdr(sys, |ratio| tab.sdr(ratio, 1.0))?.1,
                None => continue,
            },
            SchemeId::Band(..) => continue,
        };
        match cost_bounds(sys, &cfg.weights, sdr) {
            Ok(b) => {
                table.push("steady", scheme.name(), "cost_upper_bound", b.upper, 0.0, 0)?;
                table.push("steady", scheme.name(), "cost_lower_bound", b.lower, 0.0, 0)?;
            }
            Err(Error::InfeasibleRegime { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Simulates the configured ensemble and summarizes it.
pub fn run_control_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.schemes.is_empty() {
        return Err(Error::Config("run.schemes is empty".into()));
    }
    let ctx = ControlContext::new(cfg)?;
    let ens = simulate_ensemble(cfg, &ctx)?;
    summarize(cfg, &ctx, &ens)
}
