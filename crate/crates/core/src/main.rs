use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lqgsim::harness::{
    export_csv, run_bounds_report, run_control_experiment, run_optimize, run_sdr_sweep, ExperimentConfig,
    ExperimentOutput, Preset,
};

#[derive(Parser)]
#[command(name = "lqgsim", version, about = "LQG control over an AWGN channel with SI at the controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControlPreset {
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Subcommand)]
enum Command {
    /// SDR versus SNR of one channel use.
    SdrSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo cost evolution of the closed-loop schemes.
    Control {
        #[arg(long, value_enum)]
        preset: ControlPreset,
        /// Extra `key = value` overrides applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Replace every noise draw by zero.
        #[arg(long)]
        zero_noise: bool,
    },
    /// Steady-state estimation fixed points and cost bounds.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search for the best power-feasible modulo triple.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> lqgsim::Result<(ExperimentOutput, PathBuf)> {
    let finish = |out: lqgsim::Result<ExperimentOutput>, path: PathBuf| out.map(|o| (o, path));
    match command {
        Command::SdrSweep { config, out } => finish(run_sdr_sweep(&ExperimentConfig::load(&config)?), out),
        Command::Bounds { config, out } => finish(run_bounds_report(&ExperimentConfig::load(&config)?), out),
        Command::Optimize { config, out } => finish(run_optimize(&ExperimentConfig::load(&config)?), out),
        Command::Control {
            preset,
            config,
            runs,
            seed,
            out,
            zero_noise,
        } => {
            let preset = match preset {
                ControlPreset::Fig3 => Preset::Fig3,
                ControlPreset::Fig4 => Preset::Fig4,
                ControlPreset::Fig5 => Preset::Fig5,
            };
            let mut text = format!("preset = {}\n", preset.name());
            if let Some(path) = config {
                text += &std::fs::read_to_string(&path).map_err(|source| lqgsim::Error::Io { path, source })?;
            }
            let mut cfg = ExperimentConfig::parse(&text)?;
            if cfg.preset != preset {
                return Err(lqgsim::Error::Config("--config may not switch the preset".into()));
            }
            if let Some(runs) = runs {
                cfg.runs = runs;
            }
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            cfg.zero_noise |= zero_noise;
            cfg.validate()?;
            finish(run_control_experiment(&cfg), out)
        }
    }
}

fn write(output: &ExperimentOutput, path: &Path) -> lqgsim::Result<()> {
    export_csv(&output.table, path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command).and_then(|(output, path)| write(&output, &path).map(|_| output));
    match result {
        Ok(output) if output.findings.is_empty() => ExitCode::SUCCESS,
        Ok(output) => {
            for f in &output.findings {
                eprintln!("finding: {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
