//! Flat `key = value` experiment configuration and the bundled presets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::control::{ScalingMode, UncertaintyModel};
use crate::error::{Error, Result};
use crate::jscc::ModuloParams;
use crate::numerics::{db_to_linear, GridSpec};
use crate::sysmodel::{LqrWeights, SystemSpec};

const FIG2: &str = include_str!("../../presets/fig2.cfg");
const FIG3: &str = include_str!("../../presets/fig3.cfg");
const FIG4: &str = include_str!("../../presets/fig4.cfg");
const FIG5: &str = include_str!("../../presets/fig5.cfg");

const KNOWN_KEYS: &[&str] = &[
    "preset",
    "sys.lambda",
    "sys.sigma_w2",
    "sys.sigma_z2",
    "sys.snr_db",
    "sys.horizon",
    "weights.q",
    "weights.r",
    "weights.q_eta",
    "modulo.alpha",
    "modulo.beta",
    "modulo.delta",
    "modulo.normalize",
    "uncertainty.l_lo",
    "uncertainty.l_hi",
    "uncertainty.r_lo",
    "uncertainty.r_hi",
    "tracking.reference",
    "run.runs",
    "run.seed",
    "run.schemes",
    "run.steady_fraction",
    "run.zero_noise",
    "sweep.p_z",
    "sweep.snr_db",
    "sweep.samples",
    "sweep.linear_samples",
    "sweep.encoders",
    "table.samples",
    "table.ratio_lo",
    "table.ratio_hi",
    "table.ratio_n",
    "table.scale_lo",
    "table.scale_n",
    "optimize.ratio",
    "optimize.alphas",
    "optimize.betas",
    "optimize.deltas",
    "optimize.samples",
    "grid.lo",
    "grid.hi",
    "grid.n",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Custom => "custom",
        }
    }

    /// Text of the bundled config file, `None` for `custom`.
    pub fn source(self) -> Option<&'static str> {
        match self {
            Preset::Fig2 => Some(FIG2),
            Preset::Fig3 => Some(FIG3),
            Preset::Fig4 => Some(FIG4),
            Preset::Fig5 => Some(FIG5),
            Preset::Custom => None,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            "custom" => Ok(Preset::Custom),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoder {
    Linear,
    Modulo,
}

/// Which estimator/encoder pair a simulated run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    /// SI at both ends.
    TwoSided,
    /// Receiver SI with feedback of the prediction, linear encoder.
    Linear,
    /// Receiver SI with feedback of the prediction, modulo encoder.
    Modulo,
    /// No feedback; the sensor only knows a band for the gain (and the
    /// reference when tracking).
    Band(Encoder, ScalingMode),
}

impl SchemeId {
    pub fn name(self) -> &'static str {
        match self {
            SchemeId::TwoSided => "two-sided",
            SchemeId::Linear => "linear",
            SchemeId::Modulo => "modulo",
            SchemeId::Band(Encoder::Linear, ScalingMode::WorstCase) => "linear-worst-case",
            SchemeId::Band(Encoder::Modulo, ScalingMode::WorstCase) => "modulo-worst-case",
            SchemeId::Band(Encoder::Linear, ScalingMode::Randomized) => "linear-randomized",
            SchemeId::Band(Encoder::Modulo, ScalingMode::Randomized) => "modulo-randomized",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use {Encoder::*, ScalingMode::*};
        Ok(match s {
            "two-sided" => SchemeId::TwoSided,
            "linear" => SchemeId::Linear,
            "modulo" => SchemeId::Modulo,
            "linear-worst-case" => SchemeId::Band(Linear, WorstCase),
            "modulo-worst-case" => SchemeId::Band(Modulo, WorstCase),
            "linear-randomized" => SchemeId::Band(Linear, Randomized),
            "modulo-randomized" => SchemeId::Band(Modulo, Randomized),
            _ => return Err(Error::Config(format!("unknown scheme {s:?}"))),
        })
    }
}

/// Gain and reference bands, without the scaling mode (that comes with
/// each scheme).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bands {
    pub l_lo: f64,
    pub l_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl Bands {
    pub fn model(&self, mode: ScalingMode) -> Result<UncertaintyModel> {
        UncertaintyModel::new(self.l_lo, self.l_hi, self.r_lo, self.r_hi, mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub p_z: f64,
    pub snr_grid_db: Vec<f64>,
    pub samples: usize,
    pub linear_samples: usize,
    pub encoders: Vec<(String, ModuloParams)>,
}

/// Nodes of the SDR tables used by the modulo schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableConfig {
    pub samples: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub ratio_n: usize,
    pub scale_lo: f64,
    pub scale_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub ratio: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Missing for sweep-only configs.
    pub sys: Option<SystemSpec>,
    pub weights: LqrWeights,
    /// State weight on the integrator when tracking.
    pub q_eta: f64,
    pub modulo: ModuloParams,
    /// Scale `(α, β)` of every transmitted triple to unit power at unit
    /// input variance. Turning it off is a diagnostic: the published
    /// triples then exceed the power limit.
    pub normalize_modulo: bool,
    pub uncertainty: Option<Bands>,
    pub ref_level: Option<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub schemes: Vec<SchemeId>,
    pub steady_fraction: f64,
    pub zero_noise: bool,
    pub sweep: Option<SweepConfig>,
    pub table: TableConfig,
    pub optimize: Option<OptimizeConfig>,
    pub grid: GridSpec,
}

/// `key = value` pairs in file order; `#` starts a comment.
fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn need<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.0.keys().any(|k| k.starts_with(prefix))
    }
}

fn named_encoder(name: &str) -> Result<ModuloParams> {
    match name {
        "chen-tuncel" => Ok(ModuloParams::chen_tuncel()),
        "kochman-zamir" => Ok(ModuloParams::kochman_zamir()),
        "control-default" => Ok(ModuloParams::control_default()),
        "linear" => Ok(ModuloParams::linear()),
        _ => {
            // Inline triple `alpha/beta/delta`.
            let parts: Vec<&str> = name.split('/').collect();
            let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[a, b, d]) => ModuloParams::new(a, b, d),
                _ => Err(Error::Config(format!("unknown encoder {name:?}"))),
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses config text. A `preset = figN` line loads the bundled preset
    /// first; the remaining lines override it.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let preset = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.parse::<Preset>())
            .transpose()?
            .unwrap_or(Preset::Custom);
        let mut map = BTreeMap::new();
        if let Some(src) = preset.source() {
            map.extend(parse_pairs(src)?);
        }
        map.extend(pairs);
        Self::from_values(preset, &Values(map))
    }

    pub fn from_preset(preset: Preset) -> Result<Self> {
        Self::parse(&format!("preset = {}", preset.name()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn from_values(preset: Preset, v: &Values) -> Result<Self> {
        let sys = if v.has_prefix("sys.") {
            Some(SystemSpec::new(
                v.need("sys.lambda")?,
                v.need("sys.sigma_w2")?,
                v.need("sys.sigma_z2")?,
                db_to_linear(v.need("sys.snr_db")?),
                v.need("sys.horizon")?,
            )?)
        } else {
            None
        };
        let q = v.get("weights.q", 1.0)?;
        let weights = LqrWeights::constant(q, v.get("weights.r", 1.0)?)?;
        let control = ModuloParams::control_default();
        let modulo = ModuloParams::new(
            v.get("modulo.alpha", control.alpha)?,
            v.get("modulo.beta", control.beta)?,
            v.get("modulo.delta", control.delta)?,
        )?;
        let uncertainty = if v.has_prefix("uncertainty.") {
            let bands = Bands {
                l_lo: v.get("uncertainty.l_lo", 1.0)?,
                l_hi: v.get("uncertainty.l_hi", 1.0)?,
                r_lo: v.get("uncertainty.r_lo", 1.0)?,
                r_hi: v.get("uncertainty.r_hi", 1.0)?,
            };
            bands.model(ScalingMode::WorstCase)?;
            Some(bands)
        } else {
            None
        };
        let sweep = match v.list::<f64>("sweep.snr_db")? {
            Some(snr_grid_db) => {
                let names: Vec<String> = v.list("sweep.encoders")?.unwrap_or_default();
                let encoders = names
                    .into_iter()
                    .map(|n| named_encoder(&n).map(|p| (n, p)))
                    .collect::<Result<Vec<_>>>()?;
                let samples = v.get("sweep.samples", 200_000)?;
                Some(SweepConfig {
                    p_z: v.need("sweep.p_z")?,
                    snr_grid_db,
                    samples,
                    linear_samples: v.get("sweep.linear_samples", samples)?,
                    encoders,
                })
            }
            None => None,
        };
        let optimize = if v.has_prefix("optimize.") {
            Some(OptimizeConfig {
                ratio: v.need("optimize.ratio")?,
                alphas: v.list("optimize.alphas")?.ok_or_else(|| Error::Config("missing key optimize.alphas".into()))?,
                betas: v.list("optimize.betas")?.ok_or_else(|| Error::Config("missing key optimize.betas".into()))?,
                deltas: v.list("optimize.deltas")?.ok_or_else(|| Error::Config("missing key optimize.deltas".into()))?,
                samples: v.get("optimize.samples", 10_000)?,
            })
        } else {
            None
        };
        let default_grid = GridSpec::standard();
        let grid = GridSpec::new(
            v.get("grid.lo", default_grid.lo())?,
            v.get("grid.hi", default_grid.hi())?,
            v.get("grid.n", default_grid.n_points())?,
        )?;
        let cfg = Self {
            preset,
            sys,
            weights,
            q_eta: v.get("weights.q_eta", q)?,
            modulo,
            normalize_modulo: v.get("modulo.normalize", true)?,
            uncertainty,
            ref_level: v.parse("tracking.reference")?,
            runs: v.get("run.runs", 1)?,
            base_seed: v.get("run.seed", 0)?,
            schemes: v.list("run.schemes")?.unwrap_or_default(),
            steady_fraction: v.get("run.steady_fraction", 0.25)?,
            zero_noise: v.get("run.zero_noise", false)?,
            sweep,
            table: TableConfig {
                samples: v.get("table.samples", 20_000)?,
                ratio_lo: v.get("table.ratio_lo", 1.0)?,
                ratio_hi: v.get("table.ratio_hi", 40.0)?,
                ratio_n: v.get("table.ratio_n", 8)?,
                scale_lo: v.get("table.scale_lo", 1.0)?,
                scale_n: v.get("table.scale_n", 1)?,
            },
            optimize,
            grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The triple actually transmitted for `params` and the gain applied
    /// to it.
    pub fn transmit_params(&self, params: &ModuloParams) -> Result<(ModuloParams, f64)> {
        if self.normalize_modulo {
            params.power_normalized(&self.grid)
        } else {
            Ok((*params, 1.0))
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.ref_level.is_some()
    }

    /// The regulation/tracking system, or a config error.
    pub fn system(&self) -> Result<&SystemSpec> {
        self.sys.as_ref().ok_or_else(|| Error::Config("this command needs the sys.* keys".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("run.runs must be at least 1".into()));
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return Err(Error::Config("run.steady_fraction must lie in (0, 1]".into()));
        }
        if let Some(r) = self.ref_level {
            if !r.is_finite() {
                return Err(Error::Config("tracking.reference must be finite".into()));
            }
        }
        for s in &self.schemes {
            let ok = match s {
                SchemeId::TwoSided => true,
                SchemeId::Linear | SchemeId::Modulo => {
                    !self.is_tracking() && !matches!(self.preset, Preset::Fig4 | Preset::Fig5)
                }
                SchemeId::Band(..) => self.uncertainty.is_some() && self.preset != Preset::Fig3,
            };
            if !ok {
                return Err(Error::Config(format!("scheme {s} is not valid for this configuration")));
            }
        }
        let mut seen = self.schemes.clone();
        seen.sort_by_key(|s| s.name());
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("run.schemes lists a scheme twice".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.snr_grid_db.is_empty() {
                return Err(Error::Config("sweep.snr_db must not be empty".into()));
            }
            if !(sw.p_z > 0.0) {
                return Err(Error::Config("sweep.p_z must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for p in [Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5] {
            let cfg = ExperimentConfig::from_preset(p).unwrap();
            assert_eq!(cfg.preset, p);
        }
        let fig3 = ExperimentConfig::from_preset(Preset::Fig3).unwrap();
        let sys = fig3.system().unwrap();
        assert_eq!((sys.lambda, sys.sigma_w2, sys.sigma_z2, sys.horizon), (2.0, 1.0, 0.125, 200));
        assert!((sys.snr - 10f64.powf(0.6)).abs() < 1e-12);
        assert_eq!(fig3.runs, 1024);
        assert_eq!(fig3.modulo, ModuloParams::control_default());
        assert_eq!(fig3.schemes, vec![SchemeId::TwoSided, SchemeId::Linear, SchemeId::Modulo]);
        let fig5 = ExperimentConfig::from_preset(Preset::Fig5).unwrap();
        assert_eq!(fig5.ref_level, Some(10.0));
        assert_eq!(fig5.system().unwrap().sigma_z2, 12.0);
        let fig2 = ExperimentConfig::from_preset(Preset::Fig2).unwrap();
        let sw = fig2.sweep.unwrap();
        assert_eq!(sw.encoders[0].1, ModuloParams::chen_tuncel());
        assert_eq!(sw.encoders[1].1, ModuloParams::kochman_zamir());
        assert!(fig2.sys.is_none());
    }

    #[test]
    fn overrides_follow_the_preset() {
        let cfg = ExperimentConfig::parse("preset = fig3\nrun.runs = 8 # fewer\nsys.snr_db = 0\n").unwrap();
        assert_eq!(cfg.runs, 8);
        assert_eq!(cfg.system().unwrap().snr, 1.0);
        assert_eq!(cfg.system().unwrap().sigma_z2, 0.125);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(matches!(ExperimentConfig::parse("sys.lamda = 2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("preset = fig3\nrun.runs = many"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("preset = fig3\nrun.runs = 0"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("just words"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("preset = fig9"), Err(Error::Config(_))));
    }

    #[test]
    fn schemes_must_suit_the_preset() {
        assert!(ExperimentConfig::parse("preset = fig3\nrun.schemes = modulo-randomized").is_err());
        assert!(ExperimentConfig::parse("preset = fig5\nrun.schemes = linear").is_err());
        assert!(ExperimentConfig::parse("preset = fig4\nrun.schemes = two-sided, two-sided").is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        let fig4 = ExperimentConfig::from_preset(Preset::Fig4).unwrap();
        for s in fig4.schemes.iter().chain([SchemeId::Linear, SchemeId::Modulo].iter()) {
            assert_eq!(s.name().parse::<SchemeId>().unwrap(), *s);
        }
    }

    #[test]
    fn inline_encoder_triples() {
        let cfg = ExperimentConfig::parse("sweep.p_z = 0.5\nsweep.snr_db = 3\nsweep.encoders = 0.5/1/4, linear").unwrap();
        let sw = cfg.sweep.unwrap();
        assert_eq!(sw.encoders[0].1, ModuloParams::new(0.5, 1.0, 4.0).unwrap());
        assert!(sw.encoders[1].1.is_linear());
    }
}
