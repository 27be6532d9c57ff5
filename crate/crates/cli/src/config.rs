//! Run settings: built-in defaults, overridden by flags, overridden by a JSON config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use pmuplace::info::{FailureMode, ObjectiveMode, Unit};
use pmuplace::measurements::{DEFAULT_AVAILABILITY, DEFAULT_CONV_STD_DEG, DEFAULT_PMU_STD_DEG};
use pmuplace::network::CaseFormat;
use pmuplace::placement::DEFAULT_EXHAUSTIVE_CAP;

pub const DEFAULT_MC_SAMPLES: usize = 2000;
pub const DEFAULT_TRIALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    F1,
    F2,
}

impl From<Objective> for ObjectiveMode {
    fn from(o: Objective) -> Self {
        match o {
            Objective::F1 => ObjectiveMode::F1,
            Objective::F2 => ObjectiveMode::F2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureChoice {
    /// Exact enumeration, falling back to Monte Carlo when the pattern count is too large.
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitChoice {
    Nats,
    Bits,
}

impl From<UnitChoice> for Unit {
    fn from(u: UnitChoice) -> Self {
        match u {
            UnitChoice::Nats => Unit::Nats,
            UnitChoice::Bits => Unit::Bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Greedy,
    Lazy,
    Exhaustive,
}

/// Per-bus PMU overrides; noise is a standard deviation in degrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusOverrideDeg {
    pub noise_deg: Option<f64>,
    pub availability: Option<f64>,
}

/// Flags shared by every command. Unset flags fall through to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Case file (.json or .m), or a bundled case: ieee14, ieee57, path3, ring4, radial5, mesh6.
    #[arg(long)]
    pub case: Option<String>,
    /// Case file format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CaseFormat>,
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    /// Placement budget.
    #[arg(long)]
    pub k: Option<usize>,
    /// Largest budget of a sweep.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Largest number of branches one PMU may monitor.
    #[arg(long)]
    pub channel_limit: Option<usize>,
    /// PMU noise standard deviation in degrees.
    #[arg(long)]
    pub pmu_noise_deg: Option<f64>,
    /// Conventional meter noise standard deviation (applied to per-unit power rows).
    #[arg(long)]
    pub conv_noise_deg: Option<f64>,
    /// Probability each PMU channel delivers a value.
    #[arg(long)]
    pub availability: Option<f64>,
    #[arg(long, value_enum)]
    pub failure_mode: Option<FailureChoice>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Unit of the headline value in reports; both units are always written.
    #[arg(long, value_enum)]
    pub unit: Option<UnitChoice>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// JSON file whose entries override these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverChoice>,
    /// Write wall-clock time into the JSON report (makes reruns differ).
    #[arg(long)]
    pub record_timing: bool,
}

fn parse_format(s: &str) -> std::result::Result<CaseFormat, String> {
    s.parse().map_err(|e: pmuplace::Error| e.to_string())
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<String>,
    pub format: Option<String>,
    pub objective: Option<Objective>,
    pub k: Option<usize>,
    pub k_max: Option<usize>,
    pub channel_limit: Option<usize>,
    pub pmu_noise_deg: Option<f64>,
    pub conv_noise_deg: Option<f64>,
    pub availability: Option<f64>,
    pub failure_mode: Option<FailureChoice>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub unit: Option<UnitChoice>,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub solver: Option<SolverChoice>,
    pub record_timing: Option<bool>,
    /// Injection scale per time slot; one slot at scale 1 by default.
    pub slot_scales: Option<Vec<f64>>,
    /// Overrides keyed by bus id.
    pub overrides: Option<BTreeMap<u32, BusOverrideDeg>>,
    pub exhaustive_cap: Option<f64>,
    /// Candidate ids for `eval`.
    pub set: Option<Vec<u32>>,
    /// Probe trials for `verify`.
    pub trials: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub case: String,
    #[serde(skip)]
    pub format: Option<CaseFormat>,
    pub objective: Objective,
    pub k: usize,
    pub k_max: Option<usize>,
    pub channel_limit: Option<usize>,
    pub pmu_noise_deg: f64,
    pub conv_noise_deg: f64,
    pub availability: f64,
    pub overrides: BTreeMap<u32, BusOverrideDeg>,
    pub slot_scales: Vec<f64>,
    pub failure_mode: FailureChoice,
    pub mc_samples: usize,
    pub seed: u64,
    pub unit: UnitChoice,
    #[serde(skip)]
    pub out_json: Option<PathBuf>,
    #[serde(skip)]
    pub out_csv: Option<PathBuf>,
    pub solver: SolverChoice,
    #[serde(skip)]
    pub record_timing: bool,
    pub exhaustive_cap: f64,
    pub set: Vec<u32>,
    pub trials: usize,
}

impl RunConfig {
    /// Merges a config file (if any) over flags over defaults, then validates.
    pub fn resolve(flags: &Flags, extra_set: Option<Vec<u32>>, extra_trials: Option<usize>) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let format = match file.format.as_deref() {
            Some(s) => Some(s.parse::<CaseFormat>()?),
            None => flags.format,
        };
        let cfg = RunConfig {
            case: file
                .case
                .or_else(|| flags.case.clone())
                .context("no case given; pass --case or set \"case\" in the config file")?,
            format,
            objective: file.objective.or(flags.objective).unwrap_or(Objective::F1),
            k: file.k.or(flags.k).unwrap_or(4),
            k_max: file.k_max.or(flags.k_max),
            channel_limit: file.channel_limit.or(flags.channel_limit),
            pmu_noise_deg: file.pmu_noise_deg.or(flags.pmu_noise_deg).unwrap_or(DEFAULT_PMU_STD_DEG),
            conv_noise_deg: file.conv_noise_deg.or(flags.conv_noise_deg).unwrap_or(DEFAULT_CONV_STD_DEG),
            availability: file.availability.or(flags.availability).unwrap_or(DEFAULT_AVAILABILITY),
            overrides: file.overrides.unwrap_or_default(),
            slot_scales: file.slot_scales.unwrap_or_else(|| vec![1.0]),
            failure_mode: file.failure_mode.or(flags.failure_mode).unwrap_or(FailureChoice::Auto),
            mc_samples: file.mc_samples.or(flags.mc_samples).unwrap_or(DEFAULT_MC_SAMPLES),
            seed: file.seed.or(flags.seed).unwrap_or(0),
            unit: file.unit.or(flags.unit).unwrap_or(UnitChoice::Nats),
            out_json: file.out_json.or_else(|| flags.out_json.clone()),
            out_csv: file.out_csv.or_else(|| flags.out_csv.clone()),
            solver: file.solver.or(flags.solver).unwrap_or(SolverChoice::Greedy),
            record_timing: file.record_timing.unwrap_or(flags.record_timing),
            exhaustive_cap: file.exhaustive_cap.unwrap_or(DEFAULT_EXHAUSTIVE_CAP),
            set: file.set.or(extra_set).unwrap_or_default(),
            trials: file.trials.or(extra_trials).unwrap_or(DEFAULT_TRIALS),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bail!("{name} must be positive and finite, got {v}")
            }
        };
        positive("pmu_noise_deg", self.pmu_noise_deg)?;
        positive("conv_noise_deg", self.conv_noise_deg)?;
        positive("exhaustive_cap", self.exhaustive_cap)?;
        let unit_interval = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                bail!("{name} must lie in [0, 1], got {v}")
            }
        };
        unit_interval("availability", self.availability)?;
        for (bus, ov) in &self.overrides {
            if let Some(n) = ov.noise_deg {
                positive(&format!("override noise_deg for bus {bus}"), n)?;
            }
            if let Some(a) = ov.availability {
                unit_interval(&format!("override availability for bus {bus}"), a)?;
            }
        }
        if self.mc_samples == 0 {
            bail!("mc_samples must be at least 1");
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.slot_scales.is_empty() || self.slot_scales.iter().any(|s| !s.is_finite()) {
            bail!("slot_scales must hold at least one finite scale");
        }
        if let Some(kmax) = self.k_max {
            if kmax < self.k {
                bail!("k_max ({kmax}) is below k ({})", self.k);
            }
        }
        Ok(())
    }

    /// Failure mode handed to the library; `Auto` starts exact.
    pub fn failure_mode(&self) -> FailureMode {
        match self.failure_mode {
            FailureChoice::Mc => self.monte_carlo(),
            FailureChoice::Auto | FailureChoice::Exact => FailureMode::Exact,
        }
    }

    pub fn monte_carlo(&self) -> FailureMode {
        FailureMode::MonteCarlo {
            samples: self.mc_samples,
            seed: self.seed,
        }
    }
}
