//! Experiment orchestration: configs, Monte Carlo ensembles, reports and
//! CSV export.

pub mod config;
pub mod ensemble;
pub mod reports;
pub mod table;

pub use config::{Bands, Encoder, ExperimentConfig, OptimizeConfig, Preset, SchemeId, SweepConfig, TableConfig};
pub use ensemble::{
    run_control_experiment, simulate_ensemble, steady_window, summarize, ControlContext, Ensemble, NoiseTrace,
    RunRecord, POWER_LIMIT,
};
pub use reports::{run_bounds_report, run_optimize, run_sdr_sweep};
pub use table::{export_csv, format_value, import_csv, ResultRow, ResultTable, CSV_HEADER};

use crate::error::Result;
use crate::jscc::TableAxes;

// Keeps the SDR-table streams apart from the per-run streams.
const TABLE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// A result table plus anything that should make the CLI exit with
/// status 2 (failed power audits, infeasible regimes or searches).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub findings: Vec<String>,
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn table_axes(t: &TableConfig) -> Result<TableAxes> {
    if t.scale_n <= 1 {
        TableAxes::ratios_only(t.ratio_lo, t.ratio_hi, t.ratio_n)
    } else {
        TableAxes::geometric(t.ratio_lo, t.ratio_hi, t.ratio_n, t.scale_lo, 1.0, t.scale_n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }
}
