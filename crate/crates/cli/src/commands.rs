//! `place`, `eval`, `sweep` and `verify`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use pmuplace::fixtures;
use pmuplace::info::{
    objective_value, posterior_cov, FailureMode, InfoConfig, ObjectiveSpec, PlacementObjective, Unit,
};
use pmuplace::linalg::logdet_psd;
use pmuplace::measurements::{
    candidates_observation, channel_ranking, conventional_observation, deg_std_to_var, enumerate_candidates,
    BusOverride, CandidateOptions, ConventionalPlan, PmuCandidate,
};
use pmuplace::network::{build_priors, build_susceptance, load_case, InjectionProfile, NetworkCase, SusceptanceModel};
use pmuplace::placement::{
    approximation_report, exhaustive_place, greedy_place, lazy_greedy_place, ApproximationReport, PlacementResult,
    Solver,
};
use pmuplace::verification::{
    cover_equivalence_check, mmse_monte_carlo, random_cover_instance, submodularity_probe, CoverForm, Negated,
    ProbeReport,
};
use pmuplace::Error;

use crate::config::{FailureChoice, Objective, RunConfig, SolverChoice};
use crate::output::{write_curve, write_json, CurveRow};

/// Raised when a verification check fails; maps to exit code 3.
#[derive(Debug)]
pub struct VerificationFailed(pub Vec<String>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

const NORMALIZATION_NOTE: &str =
    "normalized_gain = objective / mutual information of every candidate with no channel failures";

/// A case with its candidates and objective settings.
struct Problem {
    case: NetworkCase,
    model: SusceptanceModel,
    candidates: Vec<PmuCandidate>,
    profile: InjectionProfile,
    conventional: ConventionalPlan,
}

fn load(cfg: &RunConfig) -> Result<NetworkCase> {
    let path = Path::new(&cfg.case);
    if path.exists() {
        return Ok(load_case(path, cfg.format)?);
    }
    match fixtures::by_name(&cfg.case) {
        Some(case) => Ok(case?),
        None => Err(Error::InvalidConfig(format!(
            "case '{}' is neither a file nor a bundled case (ieee14, ieee57, path3, ring4, radial5, mesh6)",
            cfg.case
        ))
        .into()),
    }
}

impl Problem {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let case = load(cfg).with_context(|| format!("loading case {}", cfg.case))?;
        let model = build_susceptance(&case)?;
        let profile = InjectionProfile::scaled(&case, &cfg.slot_scales);
        let ranking = match cfg.channel_limit {
            Some(_) => Some(channel_ranking(&model, &build_priors(&model, &profile)?[0])),
            None => None,
        };
        let overrides = cfg
            .overrides
            .iter()
            .map(|(&bus, o)| {
                if !model.contains_bus(bus) {
                    return Err(Error::UnknownBus(bus));
                }
                Ok((
                    bus,
                    BusOverride {
                        noise_var: o.noise_deg.map(deg_std_to_var),
                        availability: o.availability,
                    },
                ))
            })
            .collect::<pmuplace::Result<BTreeMap<_, _>>>()?;
        let options = CandidateOptions {
            channel_limit: cfg.channel_limit,
            noise_var: deg_std_to_var(cfg.pmu_noise_deg),
            availability: cfg.availability,
            overrides,
            ranking,
            enumerate_subsets: false,
        };
        let candidates = enumerate_candidates(&case, &options)?;
        let conventional = ConventionalPlan::full(&case, deg_std_to_var(cfg.conv_noise_deg));
        Ok(Self {
            case,
            model,
            candidates,
            profile,
            conventional,
        })
    }

    fn spec(&self, objective: Objective, failure_mode: FailureMode, unit: Unit) -> ObjectiveSpec {
        let info = InfoConfig {
            unit,
            failure_mode,
            ..InfoConfig::default()
        };
        match objective {
            Objective::F1 => ObjectiveSpec::f1(self.profile.clone(), info),
            Objective::F2 => ObjectiveSpec::f2(self.profile.clone(), self.conventional.clone(), info),
        }
    }

    fn objective(&self, cfg: &RunConfig, objective: Objective, mode: FailureMode) -> Result<PlacementObjective> {
        let spec = self.spec(objective, mode, cfg.unit.into());
        Ok(PlacementObjective::new(&spec, &self.model, self.candidates.clone())?)
    }

    /// Runs `job` with the configured failure mode. Under `auto`, an exact run
    /// that would enumerate too many failure patterns is redone by Monte Carlo.
    fn with_fallback<T>(
        &self,
        cfg: &RunConfig,
        objective: Objective,
        job: impl Fn(&PlacementObjective) -> Result<T>,
    ) -> Result<(T, FailureMode, PlacementObjective)> {
        let mode = cfg.failure_mode();
        let obj = self.objective(cfg, objective, mode)?;
        match job(&obj) {
            Ok(v) => Ok((v, mode, obj)),
            Err(e) if cfg.failure_mode == FailureChoice::Auto && is_pattern_explosion(&e) => {
                log::warn!("{e:#}; switching to Monte Carlo with {} samples", cfg.mc_samples);
                let mc = cfg.monte_carlo();
                let obj = self.objective(cfg, objective, mc)?;
                Ok((job(&obj)?, mc, obj))
            }
            Err(e) => Err(e),
        }
    }

    /// No-failure MI of installing every candidate.
    fn normalization(&self, cfg: &RunConfig) -> Result<f64> {
        let all: Vec<PmuCandidate> = self
            .candidates
            .iter()
            .map(|c| PmuCandidate {
                voltage_availability: 1.0,
                channel_availabilities: vec![1.0; c.channels.len()],
                ..c.clone()
            })
            .collect();
        let spec = self.spec(cfg.objective, FailureMode::Exact, Unit::Nats);
        Ok(objective_value(&spec, &self.model, &all)?.value)
    }
}

fn is_pattern_explosion(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<Error>(), Some(Error::PatternExplosion { .. }))
}

fn solve(obj: &PlacementObjective, solver: SolverChoice, k: usize, cap: f64) -> Result<PlacementResult> {
    Ok(match solver {
        SolverChoice::Greedy => greedy_place(obj, k)?,
        SolverChoice::Lazy => lazy_greedy_place(obj, k)?,
        SolverChoice::Exhaustive => exhaustive_place(obj, k, cap)?,
    })
}

#[derive(Debug, Serialize)]
struct Step {
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    added: Option<u32>,
    set: Vec<u32>,
    objective_nats: f64,
    objective_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginal_nats: Option<f64>,
    normalized_gain: f64,
}

fn ratio(value: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        value / norm
    } else {
        0.0
    }
}

fn steps(result: &PlacementResult, norm: f64) -> Vec<Step> {
    let step = |k: usize, value: f64, added: Option<u32>, marginal: Option<f64>, set: Vec<u32>| Step {
        k,
        added,
        set,
        objective_nats: value,
        objective_bits: Unit::Bits.from_nats(value),
        marginal_nats: marginal,
        normalized_gain: ratio(value, norm),
    };
    match result.solver {
        Solver::Exhaustive if result.order.is_empty() => Vec::new(),
        Solver::Exhaustive => vec![step(result.order.len(), result.value(), None, None, result.set())],
        _ => (1..=result.order.len())
            .map(|k| {
                step(
                    k,
                    result.values[k - 1],
                    Some(result.order[k - 1]),
                    Some(result.marginals[k - 1]),
                    result.prefix_set(k),
                )
            })
            .collect(),
    }
}

fn curve(steps: &[Step], with_origin: bool) -> Vec<CurveRow> {
    let origin = with_origin.then_some(CurveRow {
        k: 0,
        objective_nats: 0.0,
        objective_bits: 0.0,
        normalized_gain: 0.0,
    });
    origin
        .into_iter()
        .chain(steps.iter().map(|s| CurveRow {
            k: s.k,
            objective_nats: s.objective_nats,
            objective_bits: s.objective_bits,
            normalized_gain: s.normalized_gain,
        }))
        .collect()
}

#[derive(Debug, Serialize)]
struct PlaceReport<'a> {
    command: &'static str,
    note: &'static str,
    config: &'a RunConfig,
    buses: usize,
    candidates: Vec<u32>,
    failure_mode: FailureMode,
    solver: Solver,
    budget: usize,
    order: Vec<u32>,
    steps: Vec<Step>,
    unit: Unit,
    value: f64,
    normalization_nats: f64,
    evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

pub fn place(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let problem = Problem::new(cfg)?;
    let (result, mode, obj) =
        problem.with_fallback(cfg, cfg.objective, |obj| solve(obj, cfg.solver, cfg.k, cfg.exhaustive_cap))?;
    let norm = problem.normalization(cfg)?;
    let steps = steps(&result, norm);
    let unit: Unit = cfg.unit.into();
    let report = PlaceReport {
        command: "place",
        note: NORMALIZATION_NOTE,
        config: cfg,
        buses: problem.case.buses.len(),
        candidates: obj.candidates().iter().map(|c| c.id).collect(),
        failure_mode: mode,
        solver: result.solver,
        budget: cfg.k,
        order: result.order.clone(),
        unit,
        value: unit.from_nats(result.value()),
        normalization_nats: norm,
        evaluations: result.evaluations,
        wall_time_s: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        steps,
    };
    log::info!("placed {:?} ({} evaluations)", report.order, report.evaluations);
    if let Some(path) = &cfg.out_csv {
        write_curve(path, &curve(&report.steps, true))?;
    }
    write_json(cfg.out_json.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct SlotState {
    slot: usize,
    /// Angle standard deviation in degrees by bus id, before any measurement.
    prior_std_deg: BTreeMap<u32, f64>,
    /// Given the selected PMUs with every channel alive (and the conventional
    /// meters for the conditional objective).
    posterior_std_deg: BTreeMap<u32, f64>,
    logdet_prior: f64,
    logdet_posterior: f64,
}

#[derive(Debug, Serialize)]
struct EvalReport<'a> {
    command: &'static str,
    note: &'static str,
    config: &'a RunConfig,
    set: Vec<u32>,
    failure_mode: FailureMode,
    unit: Unit,
    value: f64,
    objective_nats: f64,
    objective_bits: f64,
    std_error_nats: f64,
    normalization_nats: f64,
    normalized_gain: f64,
    slots: Vec<SlotState>,
}

fn std_map(model: &SusceptanceModel, cov: &nalgebra::DMatrix<f64>) -> BTreeMap<u32, f64> {
    model
        .bus_ids()
        .iter()
        .map(|&bus| {
            let var = model.state_index(bus).map_or(0.0, |k| cov[(k, k)]);
            (bus, var.max(0.0).sqrt().to_degrees())
        })
        .collect()
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let problem = Problem::new(cfg)?;
    let mut ids = cfg.set.clone();
    ids.sort_unstable();
    ids.dedup();
    let (estimate, mode, obj) = problem.with_fallback(cfg, cfg.objective, |obj| {
        let idx = obj.indices_of(&ids)?;
        Ok(obj.estimate(&idx)?)
    })?;
    let selected: Vec<PmuCandidate> = obj
        .indices_of(&ids)?
        .into_iter()
        .map(|i| obj.candidates()[i].clone())
        .collect();
    let pmu = candidates_observation(&selected, &problem.model)?.always_available();
    let conv = match cfg.objective {
        Objective::F2 => Some(conventional_observation(&problem.conventional, &problem.model)?),
        Objective::F1 => None,
    };
    let jitter = InfoConfig::default().jitter;
    let slots = build_priors(&problem.model, &problem.profile)?
        .into_iter()
        .enumerate()
        .map(|(t, prior)| {
            let base = match &conv {
                Some(c) => pmuplace::info::condition(&prior, c)?,
                None => prior.clone(),
            };
            let post = posterior_cov(&base, &pmu)?;
            Ok(SlotState {
                slot: t,
                prior_std_deg: std_map(&problem.model, &prior.covariance),
                posterior_std_deg: std_map(&problem.model, &post),
                logdet_prior: logdet_psd(&prior.covariance, jitter)?,
                logdet_posterior: logdet_psd(&post, jitter)?,
            })
        })
        .collect::<pmuplace::Result<Vec<_>>>()?;
    let norm = problem.normalization(cfg)?;
    let unit: Unit = cfg.unit.into();
    let report = EvalReport {
        command: "eval",
        note: NORMALIZATION_NOTE,
        config: cfg,
        set: ids,
        failure_mode: mode,
        unit,
        value: unit.from_nats(estimate.value),
        objective_nats: estimate.value,
        objective_bits: Unit::Bits.from_nats(estimate.value),
        std_error_nats: estimate.std_error,
        normalization_nats: norm,
        normalized_gain: ratio(estimate.value, norm),
        slots,
    };
    if let Some(path) = &cfg.out_csv {
        let row = CurveRow {
            k: report.set.len(),
            objective_nats: report.objective_nats,
            objective_bits: report.objective_bits,
            normalized_gain: report.normalized_gain,
        };
        write_curve(path, &[row])?;
    }
    write_json(cfg.out_json.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct OptimalStep {
    k: usize,
    set: Vec<u32>,
    objective_nats: f64,
    evaluations: u64,
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    command: &'static str,
    note: &'static str,
    config: &'a RunConfig,
    failure_mode: FailureMode,
    order: Vec<u32>,
    steps: Vec<Step>,
    normalization_nats: f64,
    evaluations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    optimal: Vec<OptimalStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    approximation: Option<ApproximationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

/// Greedy curve over budgets `k..=k_max`; with the exhaustive solver, also the
/// optimum at each budget and the greedy-to-optimal ratios.
pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let problem = Problem::new(cfg)?;
    let k_max = cfg.k_max.unwrap_or(cfg.k);
    let lazy = cfg.solver == SolverChoice::Lazy;
    let with_optimal = cfg.solver == SolverChoice::Exhaustive;
    let ((greedy, optima), mode, _) = problem.with_fallback(cfg, cfg.objective, |obj| {
        let greedy = if lazy { lazy_greedy_place(obj, k_max)? } else { greedy_place(obj, k_max)? };
        let optima = if with_optimal {
            (cfg.k.max(1)..=k_max.min(obj.candidates().len()))
                .map(|k| exhaustive_place(obj, k, cfg.exhaustive_cap))
                .collect::<pmuplace::Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok((greedy, optima))
    })?;
    let norm = problem.normalization(cfg)?;
    let all_steps = steps(&greedy, norm);
    let steps: Vec<Step> = all_steps.into_iter().filter(|s| s.k >= cfg.k).collect();
    let report = SweepReport {
        command: "sweep",
        note: NORMALIZATION_NOTE,
        config: cfg,
        failure_mode: mode,
        order: greedy.order.clone(),
        normalization_nats: norm,
        evaluations: greedy.evaluations,
        approximation: with_optimal.then(|| approximation_report(&greedy, &optima)),
        optimal: optima
            .iter()
            .map(|o| OptimalStep {
                k: o.order.len(),
                set: o.order.clone(),
                objective_nats: o.value(),
                evaluations: o.evaluations,
            })
            .collect(),
        wall_time_s: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        steps,
    };
    if let Some(path) = &cfg.out_csv {
        write_curve(path, &curve(&report.steps, cfg.k == 0))?;
    }
    write_json(cfg.out_json.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    passed: bool,
    checks: Vec<Check>,
}

fn probe_check(name: &str, report: ProbeReport, mode: FailureMode) -> Result<Check> {
    Ok(Check {
        name: name.to_string(),
        passed: report.passed(),
        detail: serde_json::json!({ "failure_mode": mode, "probe": report }),
    })
}

/// Largest probed set: small when every failure pattern is enumerated.
fn probe_size(obj: &PlacementObjective, mode: FailureMode) -> usize {
    let branching = obj
        .candidates()
        .iter()
        .flat_map(|c| c.channel_params())
        .any(|(_, a)| a > 0.0 && a < 1.0);
    match mode {
        FailureMode::Exact if branching => 4,
        _ => 6,
    }
}

pub fn verify(cfg: &RunConfig, negate: bool) -> Result<()> {
    let problem = Problem::new(cfg)?;
    let mut checks = Vec::new();

    for objective in [Objective::F1, Objective::F2] {
        let name = format!("submodularity_{}", if objective == Objective::F1 { "f1" } else { "f2" });
        let (report, mode, _) = problem.with_fallback(cfg, objective, |obj| {
            let size = probe_size(obj, cfg.failure_mode());
            Ok(if negate {
                submodularity_probe(&Negated(obj), cfg.trials, cfg.seed, size)?
            } else {
                submodularity_probe(obj, cfg.trials, cfg.seed, size)?
            })
        })?;
        log::info!("{name}: {} violations", report.submodularity_violations + report.monotonicity_violations);
        checks.push(probe_check(&name, report, mode)?);
    }

    let (lazy_ok, mode, _) = problem.with_fallback(cfg, cfg.objective, |obj| {
        let a = greedy_place(obj, cfg.k)?;
        let b = lazy_greedy_place(obj, cfg.k)?;
        Ok((a.order == b.order && a.values == b.values, a.evaluations, b.evaluations, a.order))
    })?;
    checks.push(Check {
        name: "lazy_equivalence".into(),
        passed: lazy_ok.0,
        detail: serde_json::json!({
            "failure_mode": mode,
            "budget": cfg.k,
            "order": lazy_ok.3,
            "greedy_evaluations": lazy_ok.1,
            "lazy_evaluations": lazy_ok.2,
        }),
    });

    let cover = random_cover_instance(8, 5, cfg.seed, CoverForm::NonDuplicating)?;
    let cover_check = match cover_equivalence_check(&cover, 2) {
        Ok(rep) => Check {
            name: "cover_equivalence".into(),
            passed: true,
            detail: serde_json::to_value(rep)?,
        },
        Err(e @ Error::EquivalenceViolation { .. }) => Check {
            name: "cover_equivalence".into(),
            passed: false,
            detail: serde_json::json!({ "error": e.to_string() }),
        },
        Err(e) => return Err(e.into()),
    };
    checks.push(cover_check);

    let path = fixtures::path3();
    let model = build_susceptance(&path)?;
    let prior = build_priors(&model, &InjectionProfile::nominal(&path))?.remove(0);
    let pmu = PmuCandidate::uniform(2, 2, vec![1, 3], deg_std_to_var(cfg.pmu_noise_deg), 1.0);
    let obs = candidates_observation(&[pmu], &model)?;
    let analytic = logdet_psd(&posterior_cov(&prior, &obs)?, 0.0)?;
    let mc = mmse_monte_carlo(&prior, &obs, 20_000, cfg.seed)?;
    checks.push(Check {
        name: "mmse_oracle".into(),
        passed: (mc.logdet - analytic).abs() <= 3.0 * mc.std_error,
        detail: serde_json::json!({
            "analytic_logdet": analytic,
            "monte_carlo_logdet": mc.logdet,
            "bootstrap_std_error": mc.std_error,
            "ci": [mc.ci_low, mc.ci_high],
        }),
    });

    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let report = VerifyReport {
        command: "verify",
        config: cfg,
        passed: failed.is_empty(),
        checks,
    };
    write_json(cfg.out_json.as_deref(), &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(failed).into())
    }
}
