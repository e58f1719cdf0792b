//! SDR sweeps, steady-state bound reports and the parameter search.

use rayon::prelude::*;

use super::config::{ExperimentConfig, SchemeId};
use super::table::{format_value, ResultTable};
use super::{table_axes, ExperimentOutput, TABLE_SEED_SALT};
use crate::analysis::{cost_bounds, sdr_no_si, sdr_two_sided, steady_state_linear, steady_state_sdr, steady_state_two_sided};
use crate::control::riccati_scalar;
use crate::error::{Error, Result};
use crate::jscc::{encoder_power, estimate_sdr, optimize_params, ModuloParams, SdrTable, SearchGrid, SiChannelSpec};
use crate::numerics::{db_to_linear, linear_to_db, RandomStream};
use crate::sysmodel::SystemSpec;

/// SDR of one channel use versus SNR: closed forms for the linear,
/// two-sided and no-SI schemes, Monte Carlo for the linear scheme and for
/// each power-normalized modulo encoder. All encoders at one SNR point
/// share stream `(seed, point index)`.
pub fn run_sdr_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sdr-sweep needs the sweep.* keys".into()))?;
    let normalized = sw
        .encoders
        .iter()
        .map(|(name, p)| cfg.transmit_params(p).map(|(q, g)| (name.as_str(), q, g)))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs: Vec<(usize, Option<usize>)> = Vec::new();
    for j in 0..sw.snr_grid_db.len() {
        jobs.push((j, None));
        jobs.extend((0..normalized.len()).map(|e| (j, Some(e))));
    }
    let estimates = jobs
        .par_iter()
        .map(|&(j, e)| {
            let spec = SiChannelSpec::new(1.0, sw.p_z, db_to_linear(sw.snr_grid_db[j]))?;
            let mut stream = RandomStream::new(cfg.base_seed, j as u64);
            match e {
                None => estimate_sdr(&ModuloParams::linear(), &spec, sw.linear_samples, &mut stream, &cfg.grid),
                Some(e) => estimate_sdr(&normalized[e].1, &spec, sw.samples, &mut stream, &cfg.grid),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = ResultTable::new();
    let mut est = estimates.iter();
    for &snr_db in &sw.snr_grid_db {
        let key = format_value(snr_db);
        let snr = db_to_linear(snr_db);
        let closed = [
            ("linear", 1.0 + snr + 1.0 / sw.p_z),
            ("two-sided", sdr_two_sided(1.0, sw.p_z, snr)),
            ("no-si", sdr_no_si(snr)),
        ];
        for (name, sdr) in closed {
            table.push(key.as_str(), name, "sdr_db", linear_to_db(sdr), 0.0, 0)?;
        }
        let lin = est.next().expect("one estimate per job");
        table.push(key.as_str(), "linear-mc", "sdr_db", lin.db(), lin.db_std_err(), lin.n_samples as u64)?;
        for (name, _, gain) in &normalized {
            let e = est.next().expect("one estimate per job");
            table.push(key.as_str(), *name, "sdr_db", e.db(), e.db_std_err(), e.n_samples as u64)?;
            table.push(key.as_str(), *name, "power_gain", *gain, 0.0, 0)?;
        }
    }
    Ok(ExperimentOutput {
        table,
        findings: Vec::new(),
    })
}

fn no_si(sys: &SystemSpec) -> SystemSpec {
    SystemSpec {
        sigma_z2: f64::INFINITY,
        ..*sys
    }
}

/// Riccati solution, estimation fixed points and the steady-state cost
/// bounds of each configured regulation scheme (plus the no-SI baseline).
/// A scheme whose SDR cannot beat `λ²` yields an `infeasible` row and a
/// finding.
pub fn run_bounds_report(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.is_tracking() || cfg.uncertainty.is_some() {
        return Err(Error::Config("bounds needs a scalar regulation config without bands".into()));
    }
    let sys = cfg.system()?;
    let mut table = ResultTable::new();
    let mut findings = Vec::new();

    let ric = riccati_scalar(sys.lambda, &cfg.weights, sys.horizon)?;
    table.push("steady", "lqr", "s", ric.s_inf, 0.0, 0)?;
    table.push("steady", "lqr", "l", ric.l_inf, 0.0, 0)?;
    let mut names = vec!["two-sided", "linear"];
    if cfg.schemes.contains(&SchemeId::Modulo) {
        names.push("modulo");
    }
    names.push("no-si");
    let two = match steady_state_two_sided(sys) {
        Ok(two) => two,
        Err(Error::ConvergenceFailure { .. }) => {
            // Even the two-sided benchmark cannot keep the estimation error
            // bounded, so no scheme can.
            for name in names {
                table.push("steady", name, "infeasible", f64::NAN, 0.0, 0)?;
                findings.push(format!("{name}: estimation error grows without bound"));
            }
            return Ok(ExperimentOutput { table, findings });
        }
        Err(e) => return Err(e),
    };
    table.push("steady", "two-sided", "p_pred_inf", two.p_pred_inf, 0.0, 0)?;
    table.push("steady", "two-sided", "rho_inf", two.rho_inf, 0.0, 0)?;
    table.push("steady", "two-sided", "sdr_both_inf", two.sdr_both_inf, 0.0, 0)?;

    let mut targets: Vec<(&str, Result<(f64, f64)>)> = Vec::new();
    targets.push(("two-sided", Ok((two.p_pred_inf, two.sdr_both_inf))));
    targets.push(("linear", steady_state_linear(sys)));
    if cfg.schemes.contains(&SchemeId::Modulo) {
        let (params, _) = cfg.transmit_params(&cfg.modulo)?;
        let tab = SdrTable::build(
            params,
            sys.snr,
            &table_axes(&cfg.table)?,
            cfg.table.samples,
            cfg.base_seed ^ TABLE_SEED_SALT,
            &cfg.grid,
        )?;
        targets.push(("modulo", steady_state_sdr(sys, |ratio| tab.sdr(ratio, 1.0))));
    }
    let lam2 = sys.lambda * sys.lambda;
    let open_loop = if sdr_no_si(sys.snr) > lam2 {
        steady_state_sdr(&no_si(sys), |_| sdr_no_si(sys.snr))
    } else {
        Err(Error::InfeasibleRegime {
            sdr: sdr_no_si(sys.snr),
            lambda_sq: lam2,
        })
    };
    targets.push(("no-si", open_loop));

    for (name, steady) in targets {
        let outcome = steady.and_then(|(p, sdr)| cost_bounds(sys, &cfg.weights, sdr).map(|b| (p, b)));
        match outcome {
            Ok((p, b)) => {
                table.push("steady", name, "p_pred_inf_scheme", p, 0.0, 0)?;
                table.push("steady", name, "sdr_inf", b.sdr_inf, 0.0, 0)?;
                table.push("steady", name, "upper", b.upper, 0.0, 0)?;
                table.push("steady", name, "lower", b.lower, 0.0, 0)?;
            }
            Err(Error::InfeasibleRegime { sdr, lambda_sq }) => {
                table.push("steady", name, "infeasible", sdr, 0.0, 0)?;
                findings.push(format!("{name}: SDR {sdr:.4} does not exceed lambda^2 = {lambda_sq}"));
            }
            Err(Error::ConvergenceFailure { last, .. }) => {
                table.push("steady", name, "infeasible", f64::NAN, 0.0, 0)?;
                findings.push(format!("{name}: estimation fixed point diverged (last iterate {last})"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ExperimentOutput { table, findings })
}

/// Grid search for the best power-feasible triple at source-to-SI ratio
/// `optimize.ratio` and SNR `sys.snr_db`.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let opt = cfg
        .optimize
        .as_ref()
        .ok_or_else(|| Error::Config("optimize needs the optimize.* keys".into()))?;
    let sys = cfg.system()?;
    let spec = SiChannelSpec::new(1.0, opt.ratio.recip(), sys.snr)?;
    let search = SearchGrid {
        alphas: opt.alphas.clone(),
        betas: opt.betas.clone(),
        deltas: opt.deltas.clone(),
    };
    let mut table = ResultTable::new();
    let mut findings = Vec::new();
    let linear = linear_to_db(1.0 + sys.snr + opt.ratio);
    table.push("optimize", "linear", "sdr_db", linear, 0.0, 0)?;
    match optimize_params(&spec, &search, opt.samples, &RandomStream::new(cfg.base_seed, 0), &cfg.grid) {
        Ok((p, e)) => {
            table.push("optimize", "best", "alpha", p.alpha, 0.0, 0)?;
            table.push("optimize", "best", "beta", p.beta, 0.0, 0)?;
            table.push("optimize", "best", "delta", p.delta, 0.0, 0)?;
            table.push("optimize", "best", "power", encoder_power(&p, &cfg.grid)?, 0.0, 0)?;
            table.push("optimize", "best", "sdr_db", e.db(), e.db_std_err(), e.n_samples as u64)?;
        }
        Err(Error::InfeasibleSearch(msg)) => {
            table.push("optimize", "best", "infeasible", 1.0, 0.0, 0)?;
            findings.push(msg);
        }
        Err(e) => return Err(e),
    }
    Ok(ExperimentOutput { table, findings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;

    #[test]
    fn sweep_closed_form_rows() {
        let cfg = ExperimentConfig::parse("preset = fig2\nsweep.snr_db = 6\nsweep.samples = 10000\nsweep.linear_samples = 10000")
            .unwrap();
        let out = run_sdr_sweep(&cfg).unwrap();
        let lin = out.table.get("6", "linear", "sdr_db").unwrap().value;
        assert!((lin - 10.0 * (1.0 + 10f64.powf(0.6) + 9.0).log10()).abs() < 1e-9);
        assert!((lin - 11.45).abs() < 1e-2);
        for name in ["chen-tuncel", "kochman-zamir", "linear-mc"] {
            let r = out.table.get("6", name, "sdr_db").unwrap();
            let two = out.table.get("6", "two-sided", "sdr_db").unwrap().value;
            assert!(r.value <= two + 3.0 * r.std_err, "{name}");
        }
    }

    #[test]
    fn bounds_of_fig3() {
        let cfg = ExperimentConfig::parse("preset = fig3\nrun.schemes = two-sided, linear").unwrap();
        let out = run_bounds_report(&cfg).unwrap();
        let get = |s: &str, k: &str| out.table.get("steady", s, k).unwrap().value;
        assert!((get("two-sided", "upper") - get("two-sided", "lower")).abs() < 1e-10);
        assert!((get("lqr", "s") - (8.0 + 84f64.sqrt()) / 2.0).abs() < 1e-10);
        let rho = get("two-sided", "rho_inf");
        assert!((get("two-sided", "sdr_both_inf") - (1.0 + 10f64.powf(0.6)) / (1.0 - rho)).abs() < 1e-9);
        assert!(get("linear", "upper") > get("two-sided", "upper"));
        assert!(out.findings.is_empty());
    }

    #[test]
    fn low_snr_is_reported_infeasible() {
        let cfg = ExperimentConfig::parse("preset = fig3\nsys.snr_db = 3\nsys.sigma_z2 = inf\nrun.schemes = linear").unwrap();
        let out = run_bounds_report(&cfg).unwrap();
        assert!(out.table.get("steady", "linear", "infeasible").is_some());
        assert!(out.table.get("steady", "no-si", "infeasible").is_some());
        assert!(!out.findings.is_empty());
    }

    #[test]
    fn bounds_rejects_tracking() {
        assert!(run_bounds_report(&ExperimentConfig::from_preset(Preset::Fig5).unwrap()).is_err());
    }

    #[test]
    fn infeasible_search_is_a_finding() {
        let cfg = ExperimentConfig::parse(
            "preset = fig3\noptimize.alphas = 0\noptimize.betas = 5\noptimize.deltas = 10\noptimize.samples = 10000",
        )
        .unwrap();
        let out = run_optimize(&cfg).unwrap();
        assert_eq!(out.table.get("optimize", "best", "infeasible").unwrap().value, 1.0);
        assert_eq!(out.findings.len(), 1);
    }
}
