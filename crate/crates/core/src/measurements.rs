//! PMU candidates, conventional meter plans and their linear-Gaussian
//! observation models.
//!
//! A PMU at bus `i` measures its own angle, `z = theta_i + e`, and one angle
//! difference `z = theta_i - theta_j + e` per monitored branch. The slack angle
//! is identically zero, so its term is dropped from every row. Each channel
//! independently reports a failure instead of a value with probability
//! `1 - availability`.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkCase, StatePrior, SusceptanceModel};

pub const DEFAULT_PMU_STD_DEG: f64 = 0.02;
pub const DEFAULT_CONV_STD_DEG: f64 = 0.57;
pub const DEFAULT_AVAILABILITY: f64 = 0.97;
/// Hard cap on candidates produced by channel-subset enumeration.
pub const MAX_SUBSET_CANDIDATES: usize = 100_000;
/// Largest number of branching channels [`failure_patterns`] will enumerate.
pub const MAX_PATTERN_CHANNELS: usize = 20;

/// Variance in radians squared of a standard deviation given in degrees.
pub fn deg_std_to_var(std_deg: f64) -> f64 {
    std_deg.to_radians().powi(2)
}

/// One PMU configuration `{bus, monitored neighbors}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmuCandidate {
    pub id: u32,
    pub bus: u32,
    /// Monitored neighbors, in channel order.
    pub channels: Vec<u32>,
    #[serde(default = "yes")]
    pub measures_voltage: bool,
    pub voltage_noise_var: f64,
    pub current_noise_vars: Vec<f64>,
    pub voltage_availability: f64,
    pub channel_availabilities: Vec<f64>,
}

fn yes() -> bool {
    true
}

/// A measurement channel of a PMU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    Voltage,
    Current(u32),
}

impl PmuCandidate {
    /// Candidate with uniform noise and availability on every channel.
    pub fn uniform(id: u32, bus: u32, channels: Vec<u32>, noise_var: f64, availability: f64) -> Self {
        let n = channels.len();
        Self {
            id,
            bus,
            channels,
            measures_voltage: true,
            voltage_noise_var: noise_var,
            current_noise_vars: vec![noise_var; n],
            voltage_availability: availability,
            channel_availabilities: vec![availability; n],
        }
    }

    /// Channels in row order: the voltage channel (if present) then currents.
    pub fn channel_list(&self) -> Vec<Channel> {
        let voltage = self.measures_voltage.then_some(Channel::Voltage);
        voltage
            .into_iter()
            .chain(self.channels.iter().map(|&j| Channel::Current(j)))
            .collect()
    }

    pub fn channel_count(&self) -> usize {
        usize::from(self.measures_voltage) + self.channels.len()
    }

    /// `(noise variance, availability)` for each channel in row order.
    pub fn channel_params(&self) -> Vec<(f64, f64)> {
        let voltage = self
            .measures_voltage
            .then_some((self.voltage_noise_var, self.voltage_availability));
        voltage
            .into_iter()
            .chain(
                self.current_noise_vars
                    .iter()
                    .copied()
                    .zip(self.channel_availabilities.iter().copied()),
            )
            .collect()
    }

    /// The candidate reduced to the channels marked alive, with those channels always available.
    pub fn restricted(&self, alive: &[bool]) -> Self {
        assert_eq!(alive.len(), self.channel_count(), "mask length");
        let offset = usize::from(self.measures_voltage);
        let keep: Vec<usize> = (0..self.channels.len()).filter(|&k| alive[offset + k]).collect();
        Self {
            id: self.id,
            bus: self.bus,
            channels: keep.iter().map(|&k| self.channels[k]).collect(),
            measures_voltage: self.measures_voltage && alive[0],
            voltage_noise_var: self.voltage_noise_var,
            current_noise_vars: keep.iter().map(|&k| self.current_noise_vars[k]).collect(),
            voltage_availability: 1.0,
            channel_availabilities: vec![1.0; keep.len()],
        }
    }

    /// Checks topology, variances and availabilities against a model.
    pub fn validate(&self, model: &SusceptanceModel) -> Result<()> {
        let bad = |reason: String| Error::InvalidCandidate { id: self.id, reason };
        if !model.contains_bus(self.bus) {
            return Err(Error::UnknownBus(self.bus));
        }
        let n = self.channels.len();
        if self.current_noise_vars.len() != n || self.channel_availabilities.len() != n {
            return Err(bad("per-channel parameter lists differ in length".into()));
        }
        if !self.channels.iter().all_unique() {
            return Err(bad("repeated channel".into()));
        }
        for &j in &self.channels {
            if !model.contains_bus(j) {
                return Err(Error::UnknownBus(j));
            }
            if !model.are_adjacent(self.bus, j) {
                return Err(bad(format!("bus {j} is not adjacent to bus {}", self.bus)));
            }
        }
        for (var, a) in self.channel_params() {
            if !(var > 0.0 && var.is_finite()) {
                return Err(bad(format!("noise variance {var} must be positive")));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(bad(format!("availability {a} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-bus overrides of the PMU noise and availability defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BusOverride {
    pub noise_var: Option<f64>,
    pub availability: Option<f64>,
}

/// How [`enumerate_candidates`] builds the candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOptions {
    pub channel_limit: Option<usize>,
    pub noise_var: f64,
    pub availability: f64,
    pub overrides: BTreeMap<u32, BusOverride>,
    /// Prior angle variance by bus id. Under a channel limit the neighbors with
    /// the largest variance are kept; without a ranking all neighbors tie.
    pub ranking: Option<BTreeMap<u32, f64>>,
    /// Emit every channel subset of size `min(limit, degree)` instead of one candidate per bus.
    pub enumerate_subsets: bool,
}

impl Default for CandidateOptions {
    fn default() -> Self {
        Self {
            channel_limit: None,
            noise_var: deg_std_to_var(DEFAULT_PMU_STD_DEG),
            availability: DEFAULT_AVAILABILITY,
            overrides: BTreeMap::new(),
            ranking: None,
            enumerate_subsets: false,
        }
    }
}

/// Prior angle variance per bus id; the slack bus has variance 0.
pub fn channel_ranking(model: &SusceptanceModel, prior: &StatePrior) -> BTreeMap<u32, f64> {
    model
        .bus_ids()
        .iter()
        .map(|&id| {
            let var = model.state_index(id).map_or(0.0, |k| prior.covariance[(k, k)]);
            (id, var)
        })
        .collect()
}

/// Candidate PMU configurations for every bus of a case.
///
/// One candidate per bus, id equal to the bus id, unless subset enumeration is
/// on (then ids run from 1 in bus order). A slack-bus candidate with no
/// channels carries no information and is skipped.
pub fn enumerate_candidates(case: &NetworkCase, options: &CandidateOptions) -> Result<Vec<PmuCandidate>> {
    let adjacency = case.adjacency();
    let mut out = Vec::new();
    for (&bus, neighbors) in &adjacency {
        let ov = options.overrides.get(&bus).cloned().unwrap_or_default();
        let var = ov.noise_var.unwrap_or(options.noise_var);
        let avail = ov.availability.unwrap_or(options.availability);
        let neighbors: Vec<u32> = neighbors.iter().copied().collect();
        let subsets: Vec<Vec<u32>> = if options.enumerate_subsets {
            match options.channel_limit {
                Some(limit) => neighbors.iter().copied().combinations(limit.min(neighbors.len())).collect(),
                None => neighbors.iter().copied().powerset().collect(),
            }
        } else {
            vec![limited_channels(&neighbors, options)]
        };
        for channels in subsets {
            if bus == case.slack && channels.is_empty() {
                continue;
            }
            if out.len() >= MAX_SUBSET_CANDIDATES {
                return Err(Error::CandidateExplosion {
                    count: out.len() + 1,
                    cap: MAX_SUBSET_CANDIDATES,
                });
            }
            let id = if options.enumerate_subsets { out.len() as u32 + 1 } else { bus };
            out.push(PmuCandidate::uniform(id, bus, channels, var, avail));
        }
    }
    Ok(out)
}

fn limited_channels(neighbors: &[u32], options: &CandidateOptions) -> Vec<u32> {
    let Some(limit) = options.channel_limit else {
        return neighbors.to_vec();
    };
    let variance = |b: u32| options.ranking.as_ref().and_then(|r| r.get(&b).copied()).unwrap_or(0.0);
    let mut ranked = neighbors.to_vec();
    ranked.sort_by(|&a, &b| variance(b).total_cmp(&variance(a)).then(a.cmp(&b)));
    ranked.truncate(limit);
    ranked.sort_unstable();
    ranked
}

/// Provenance of one observation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowLabel {
    /// Channel `slot` (row order within the candidate) of PMU candidate `candidate`.
    Pmu { candidate: u32, slot: usize, channel: Channel },
    Injection { bus: u32 },
    Flow { from: u32, to: u32 },
}

/// Stacked linear-Gaussian measurement model `z = H theta + e`, `e ~ N(0, diag(noise_var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub h: DMatrix<f64>,
    pub noise_var: DVector<f64>,
    /// Probability each row delivers a value.
    pub availability: DVector<f64>,
    pub labels: Vec<RowLabel>,
}

impl LinearObservation {
    pub fn empty(n_states: usize) -> Self {
        Self {
            h: DMatrix::zeros(0, n_states),
            noise_var: DVector::zeros(0),
            availability: DVector::zeros(0),
            labels: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.h.ncols()
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.noise_var)
    }

    /// Rows `keep`, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self {
            h: self.h.select_rows(keep),
            noise_var: self.noise_var.select_rows(keep),
            availability: self.availability.select_rows(keep),
            labels: keep.iter().map(|&k| self.labels[k]).collect(),
        }
    }

    /// Vertical concatenation. All parts must share the state dimension.
    pub fn stack<'a>(n_states: usize, parts: impl IntoIterator<Item = &'a LinearObservation>) -> Result<Self> {
        let parts: Vec<&LinearObservation> = parts.into_iter().collect();
        if let Some(p) = parts.iter().find(|p| p.n_states() != n_states) {
            return Err(Error::DimensionMismatch(format!(
                "observation over {} states stacked into {n_states}",
                p.n_states()
            )));
        }
        let m: usize = parts.iter().map(|p| p.rows()).sum();
        let mut h = DMatrix::zeros(m, n_states);
        let mut noise = Vec::with_capacity(m);
        let mut avail = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        let mut r = 0;
        for p in parts {
            h.rows_mut(r, p.rows()).copy_from(&p.h);
            r += p.rows();
            noise.extend(p.noise_var.iter());
            avail.extend(p.availability.iter());
            labels.extend(p.labels.iter().copied());
        }
        Ok(Self {
            h,
            noise_var: DVector::from_vec(noise),
            availability: DVector::from_vec(avail),
            labels,
        })
    }

    /// The same rows with every availability set to 1.
    pub fn always_available(&self) -> Self {
        Self {
            availability: DVector::from_element(self.rows(), 1.0),
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        let m = self.rows();
        if self.noise_var.len() != m || self.availability.len() != m || self.labels.len() != m {
            return Err(Error::DimensionMismatch("observation row bookkeeping".into()));
        }
        if self.noise_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig("observation noise variances must be positive".into()));
        }
        Ok(())
    }
}

/// Observation rows of one PMU candidate.
pub fn candidate_observation(cand: &PmuCandidate, model: &SusceptanceModel) -> Result<LinearObservation> {
    cand.validate(model)?;
    let n = model.n_states();
    let channels = cand.channel_list();
    let params = cand.channel_params();
    let mut h = DMatrix::zeros(channels.len(), n);
    let own = model.state_index(cand.bus);
    for (r, ch) in channels.iter().enumerate() {
        if let Some(k) = own {
            h[(r, k)] = 1.0;
        }
        if let Channel::Current(j) = *ch {
            if let Some(k) = model.state_index(j) {
                h[(r, k)] = -1.0;
            }
        }
    }
    Ok(LinearObservation {
        h,
        noise_var: DVector::from_iterator(params.len(), params.iter().map(|p| p.0)),
        availability: DVector::from_iterator(params.len(), params.iter().map(|p| p.1)),
        labels: channels
            .into_iter()
            .enumerate()
            .map(|(slot, channel)| RowLabel::Pmu {
                candidate: cand.id,
                slot,
                channel,
            })
            .collect(),
    })
}

/// Stacked observation of several candidates.
pub fn candidates_observation(cands: &[PmuCandidate], model: &SusceptanceModel) -> Result<LinearObservation> {
    let parts = cands
        .iter()
        .map(|c| candidate_observation(c, model))
        .collect::<Result<Vec<_>>>()?;
    LinearObservation::stack(model.n_states(), &parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionMeter {
    pub bus: u32,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMeter {
    pub from: u32,
    pub to: u32,
    pub noise_var: f64,
}

/// Real-power injection and flow meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConventionalPlan {
    pub injection_meters: Vec<InjectionMeter>,
    pub flow_meters: Vec<FlowMeter>,
}

impl ConventionalPlan {
    /// An injection meter at every bus and a flow meter on every branch record.
    pub fn full(case: &NetworkCase, noise_var: f64) -> Self {
        Self {
            injection_meters: case
                .bus_ids()
                .into_iter()
                .map(|bus| InjectionMeter { bus, noise_var })
                .collect(),
            flow_meters: case
                .branches
                .iter()
                .map(|b| FlowMeter {
                    from: b.from,
                    to: b.to,
                    noise_var,
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.injection_meters.is_empty() && self.flow_meters.is_empty()
    }
}

/// Observation rows of a conventional plan in per-unit power.
///
/// An injection row is the bus's row of the DC equation with the slack column
/// dropped; a flow row carries `B_ij (theta_j - theta_i)` with `B_ij` the
/// off-diagonal entry of the full susceptance matrix (parallel branches summed).
pub fn conventional_observation(plan: &ConventionalPlan, model: &SusceptanceModel) -> Result<LinearObservation> {
    let n = model.n_states();
    let m = plan.injection_meters.len() + plan.flow_meters.len();
    let mut h = DMatrix::zeros(m, n);
    let mut noise = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for (r, meter) in plan.injection_meters.iter().enumerate() {
        let i = model.full_index(meter.bus).ok_or(Error::UnknownBus(meter.bus))?;
        for (k, &bus) in model.state_buses().iter().enumerate() {
            h[(r, k)] = model.b_full[(i, model.full_index(bus).expect("state bus"))];
        }
        noise.push(meter.noise_var);
        labels.push(RowLabel::Injection { bus: meter.bus });
    }
    let offset = plan.injection_meters.len();
    for (r, meter) in plan.flow_meters.iter().enumerate() {
        for bus in [meter.from, meter.to] {
            if !model.contains_bus(bus) {
                return Err(Error::UnknownBus(bus));
            }
        }
        if !model.are_adjacent(meter.from, meter.to) {
            return Err(Error::UnknownBranch(meter.from, meter.to));
        }
        let (fi, ti) = (
            model.full_index(meter.from).expect("checked"),
            model.full_index(meter.to).expect("checked"),
        );
        let b_ij = model.b_full[(fi, ti)];
        if let Some(k) = model.state_index(meter.to) {
            h[(offset + r, k)] += b_ij;
        }
        if let Some(k) = model.state_index(meter.from) {
            h[(offset + r, k)] -= b_ij;
        }
        noise.push(meter.noise_var);
        labels.push(RowLabel::Flow {
            from: meter.from,
            to: meter.to,
        });
    }
    let obs = LinearObservation {
        h,
        noise_var: DVector::from_vec(noise),
        availability: DVector::from_element(m, 1.0),
        labels,
    };
    obs.check()?;
    Ok(obs)
}

/// One joint alive/failed assignment of every channel of a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct FailurePattern {
    /// Alive flag per channel, candidates in order, channels in row order.
    pub alive: Vec<bool>,
    pub probability: f64,
}

/// Enumerates every failure pattern with nonzero probability.
///
/// Channels with availability exactly 1 (or 0) are fixed alive (or dead) and
/// not branched on.
pub fn failure_patterns(cands: &[PmuCandidate]) -> Result<Vec<FailurePattern>> {
    let avail: Vec<f64> = cands
        .iter()
        .flat_map(|c| c.channel_params().into_iter().map(|p| p.1))
        .collect();
    let branching: Vec<usize> = (0..avail.len()).filter(|&k| avail[k] > 0.0 && avail[k] < 1.0).collect();
    if branching.len() > MAX_PATTERN_CHANNELS {
        return Err(Error::PatternExplosion {
            patterns: 2f64.powi(branching.len() as i32),
            cap: 2f64.powi(MAX_PATTERN_CHANNELS as i32),
        });
    }
    let base: Vec<bool> = avail.iter().map(|&a| a >= 1.0).collect();
    let patterns = (0u64..1 << branching.len())
        .map(|bits| {
            let mut alive = base.clone();
            let mut probability = 1.0;
            for (b, &k) in branching.iter().enumerate() {
                let on = bits >> b & 1 == 1;
                alive[k] = on;
                probability *= if on { avail[k] } else { 1.0 - avail[k] };
            }
            FailurePattern { alive, probability }
        })
        .collect();
    Ok(patterns)
}

/// Rows of `obs` whose channel is alive under `pattern`; `obs` must be the
/// stacked observation of the same candidate list.
pub fn alive_rows(obs: &LinearObservation, pattern: &FailurePattern) -> LinearObservation {
    let keep: Vec<usize> = (0..obs.rows()).filter(|&r| pattern.alive[r]).collect();
    obs.select_rows(&keep)
}
