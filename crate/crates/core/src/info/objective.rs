//! The placement objective as a set function over a fixed candidate list.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::kernel::{condition_in_place, half_logdet, row_major, Mixture, SparseRow};
use super::{posterior_nats, FailureMode, MiEstimate, ObjectiveMode, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::measurements::{candidate_observation, conventional_observation, PmuCandidate};
use crate::network::{build_priors, SusceptanceModel};
use crate::placement::{IncrementalObjective, SetFunction};
use crate::rng::channel_mask;

/// Largest number of failure patterns enumerated for one evaluation, after
/// rows measuring the same quantity are merged.
pub const DEFAULT_PATTERN_CAP: f64 = (1u64 << 20) as f64;
/// Memory budget in bytes for per-sample posterior covariances kept by greedy runs.
pub const DEFAULT_SAMPLED_MEMORY: usize = 2 << 30;

/// Fixed failure scenarios: one alive mask per candidate and scenario.
#[derive(Debug, Clone)]
struct Scenarios {
    count: usize,
    /// `masks[candidate][scenario]`, bit `k` for channel slot `k`.
    masks: Vec<Vec<u64>>,
}

/// `F(S)` for subsets `S` of a candidate list, in nats.
///
/// Candidates are sorted by id; set functions address them by index. Each
/// profile slot keeps its own angle covariance, already conditioned on the
/// conventional measurements for the conditional objective. Without branching
/// failures, or under Monte Carlo failures, greedy runs keep per-scenario
/// posterior covariances and score a candidate with a small log-determinant
/// over its own rows.
#[derive(Debug, Clone)]
pub struct PlacementObjective {
    candidates: Vec<PmuCandidate>,
    rows: Vec<Vec<SparseRow>>,
    covs: Vec<Vec<f64>>,
    n: usize,
    scenarios: Option<Scenarios>,
    pattern_cap: f64,
    memory_budget: usize,
}

/// Greedy bookkeeping for [`PlacementObjective`].
#[derive(Debug, Clone)]
pub struct ObjectiveState {
    set: Vec<usize>,
    value: f64,
    /// Posterior covariance per `(slot, scenario)`, row-major.
    posteriors: Option<Vec<Vec<f64>>>,
}

impl ObjectiveState {
    pub fn selected(&self) -> &[usize] {
        &self.set
    }
}

impl PlacementObjective {
    pub fn new(spec: &ObjectiveSpec, model: &SusceptanceModel, mut candidates: Vec<PmuCandidate>) -> Result<Self> {
        spec.validate()?;
        candidates.sort_by_key(|c| c.id);
        if let Some(w) = candidates.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidConfig(format!("candidate id {} is repeated", w[0].id)));
        }
        if candidates.iter().any(|c| c.channel_count() > 64) {
            return Err(Error::InvalidConfig("a candidate may have at most 64 channels".into()));
        }
        let rows = candidates
            .iter()
            .map(|c| {
                let obs = candidate_observation(c, model)?;
                Ok(super::sparse_rows(&obs))
            })
            .collect::<Result<Vec<_>>>()?;
        let priors = build_priors(model, &spec.profile)?;
        let conv = match (spec.mode, &spec.conventional) {
            (ObjectiveMode::F2, Some(plan)) => Some(conventional_observation(plan, model)?),
            _ => None,
        };
        let covs = priors
            .iter()
            .map(|p| {
                let cov: DMatrix<f64> = match &conv {
                    Some(c) => posterior_nats(&p.covariance, c)?,
                    None => p.covariance.clone(),
                };
                Ok(row_major(&cov))
            })
            .collect::<Result<Vec<_>>>()?;
        let scenarios = match spec.info.failure_mode {
            FailureMode::MonteCarlo { samples, seed } => Some(Scenarios {
                count: samples,
                masks: candidates
                    .iter()
                    .map(|c| {
                        let avail: Vec<f64> = c.channel_params().iter().map(|p| p.1).collect();
                        (0..samples as u64)
                            .map(|s| channel_mask(seed, u64::from(c.id), s, &avail))
                            .collect()
                    })
                    .collect(),
            }),
            FailureMode::Exact => {
                let settled = rows.iter().flatten().all(|r| r.availability <= 0.0 || r.availability >= 1.0);
                settled.then(|| Scenarios {
                    count: 1,
                    masks: rows
                        .iter()
                        .map(|rs| {
                            let bits = rs
                                .iter()
                                .enumerate()
                                .filter(|(_, r)| r.availability >= 1.0)
                                .fold(0u64, |m, (k, _)| m | 1 << k);
                            vec![bits]
                        })
                        .collect(),
                })
            }
        };
        Ok(Self {
            candidates,
            rows,
            covs,
            n: model.n_states(),
            scenarios,
            pattern_cap: DEFAULT_PATTERN_CAP,
            memory_budget: DEFAULT_SAMPLED_MEMORY,
        })
    }

    pub fn with_pattern_cap(mut self, cap: f64) -> Self {
        self.pattern_cap = cap;
        self
    }

    pub fn with_memory_budget(mut self, bytes: usize) -> Self {
        self.memory_budget = bytes;
        self
    }

    pub fn candidates(&self) -> &[PmuCandidate] {
        &self.candidates
    }

    /// Index of the candidate with this id.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.candidates.binary_search_by_key(&id, |c| c.id).ok()
    }

    /// Indices of candidate ids; unknown ids are an error.
    pub fn indices_of(&self, ids: &[u32]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|&id| self.index_of(id).ok_or(Error::UnknownCandidate(id)))
            .collect()
    }

    pub fn slots(&self) -> usize {
        self.covs.len()
    }

    /// Conditioned angle covariance of slot `t` before any PMU is placed.
    pub fn base_covariance(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.covs[t])
    }

    fn alive_rows<'a>(&'a self, set: &[usize], scenario: usize, out: &mut Vec<&'a SparseRow>) {
        out.clear();
        let sc = self.scenarios.as_ref().expect("scenario mode");
        for &c in set {
            let mask = sc.masks[c][scenario];
            out.extend(
                self.rows[c]
                    .iter()
                    .enumerate()
                    .filter(|(k, r)| mask >> k & 1 == 1 && !r.is_zero())
                    .map(|(_, r)| r),
            );
        }
    }

    /// Per-scenario values averaged over slots.
    fn scenario_values(&self, set: &[usize]) -> Result<Vec<f64>> {
        let sc = self.scenarios.as_ref().expect("scenario mode");
        let slots = self.covs.len() as f64;
        (0..sc.count)
            .into_par_iter()
            .map_init(Vec::new, |buf, s| {
                self.alive_rows(set, s, buf);
                let mut total = 0.0;
                for cov in &self.covs {
                    total += half_logdet(cov, self.n, buf)?;
                }
                Ok(total / slots)
            })
            .collect()
    }

    /// `F(set)` in nats with its Monte Carlo standard error.
    pub fn estimate(&self, set: &[usize]) -> Result<MiEstimate> {
        self.check_set(set)?;
        if set.is_empty() {
            return Ok(MiEstimate::exact(0.0));
        }
        match &self.scenarios {
            Some(sc) if sc.count == 1 => Ok(MiEstimate::exact(self.scenario_values(set)?[0])),
            Some(_) => Ok(MiEstimate::from_samples(&self.scenario_values(set)?)),
            None => {
                let rows: Vec<SparseRow> = set.iter().flat_map(|&c| self.rows[c].iter().cloned()).collect();
                let mut total = 0.0;
                for cov in &self.covs {
                    total += Mixture::build(cov, self.n, &rows, self.pattern_cap)?.expected_half_logdet()?;
                }
                Ok(MiEstimate::exact(total / self.covs.len() as f64))
            }
        }
    }

    fn check_set(&self, set: &[usize]) -> Result<()> {
        if let Some(&bad) = set.iter().find(|&&c| c >= self.candidates.len()) {
            return Err(Error::InvalidConfig(format!("candidate index {bad} out of range")));
        }
        Ok(())
    }

    fn keeps_posteriors(&self) -> bool {
        self.scenarios.as_ref().is_some_and(|sc| {
            let bytes = sc.count.saturating_mul(self.covs.len()).saturating_mul(self.n * self.n * 8);
            bytes <= self.memory_budget
        })
    }
}

impl SetFunction for PlacementObjective {
    fn ground_size(&self) -> usize {
        self.candidates.len()
    }

    fn candidate_id(&self, index: usize) -> u32 {
        self.candidates[index].id
    }

    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        Ok(self.estimate(set)?.value)
    }
}

impl IncrementalObjective for PlacementObjective {
    type State = ObjectiveState;

    fn start(&self) -> Result<ObjectiveState> {
        let posteriors = self.keeps_posteriors().then(|| {
            let count = self.scenarios.as_ref().map_or(0, |sc| sc.count);
            self.covs
                .iter()
                .flat_map(|cov| std::iter::repeat_n(cov, count).cloned())
                .collect()
        });
        if self.scenarios.is_some() && posteriors.is_none() {
            log::warn!("per-sample covariances exceed the memory budget; greedy will re-evaluate whole sets");
        }
        Ok(ObjectiveState {
            set: Vec::new(),
            value: 0.0,
            posteriors,
        })
    }

    fn value(&self, state: &ObjectiveState) -> f64 {
        state.value
    }

    fn gain(&self, state: &ObjectiveState, index: usize) -> Result<f64> {
        let Some(posteriors) = &state.posteriors else {
            let mut with = state.set.clone();
            with.push(index);
            return Ok(self.evaluate(&with)? - state.value);
        };
        let sc = self.scenarios.as_ref().expect("posteriors imply scenarios");
        let mut buf = Vec::new();
        let mut total = 0.0;
        for (k, cov) in posteriors.iter().enumerate() {
            self.alive_rows(&[index], k % sc.count, &mut buf);
            total += half_logdet(cov, self.n, &buf)?;
        }
        Ok(total / posteriors.len() as f64)
    }

    fn commit(&self, state: &mut ObjectiveState, index: usize, gain: f64) -> Result<()> {
        if let Some(posteriors) = &mut state.posteriors {
            let count = self.scenarios.as_ref().expect("posteriors imply scenarios").count;
            posteriors
                .par_iter_mut()
                .enumerate()
                .try_for_each_init(Vec::new, |buf, (k, cov)| {
                    self.alive_rows(&[index], k % count, buf);
                    condition_in_place(cov, self.n, buf)
                })?;
        }
        state.set.push(index);
        state.value += gain;
        Ok(())
    }
}
