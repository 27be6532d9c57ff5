//! DC network model: case data, the susceptance matrix and the Gaussian prior
//! over non-slack bus angles.
//!
//! Injections are modeled as independent Gaussians `P ~ N(mu, Sigma)`. With the
//! reduced susceptance matrix `B` (slack row and column removed) the DC model
//! reads `P = B theta`, so the angles are Gaussian with mean `B^-1 mu` and
//! covariance `B^-1 Sigma B^-1`.
//!
//! `B` is the weighted graph Laplacian with edge weights `1/x`. After the slack
//! reduction it is symmetric positive definite for any connected network, which
//! lets every solve in this module go through a Cholesky factorization.

mod parse;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use parse::{load_case, parse_case, CaseFormat};

/// Relative share of the mean used as the default injection standard deviation.
pub const DEFAULT_STD_FRACTION: f64 = 0.10;
/// Per-unit floor on the default injection standard deviation.
pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

/// Default injection standard deviation for a bus with mean injection `mean` (per unit).
pub fn default_injection_std(mean: f64) -> f64 {
    (DEFAULT_STD_FRACTION * mean.abs()).max(DEFAULT_STD_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Net injection mean, per unit.
    pub injection_mean: f64,
    /// Injection standard deviation, per unit.
    pub injection_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    /// Series reactance, per unit. Strictly positive.
    pub reactance: f64,
}

/// Raw grid topology plus injection statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub slack: u32,
}

impl NetworkCase {
    /// Builds a case and checks ids, branch endpoints and reactances.
    ///
    /// Connectivity is checked later, by [`build_susceptance`].
    pub fn new(base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>, slack: u32) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::MalformedCase(format!("baseMVA must be positive, got {base_mva}")));
        }
        let mut seen = BTreeSet::new();
        for bus in &buses {
            if !seen.insert(bus.id) {
                return Err(Error::DuplicateBusId(bus.id));
            }
            if !bus.injection_mean.is_finite() || !(bus.injection_std >= 0.0) {
                return Err(Error::MalformedCase(format!(
                    "bus {}: injection mean {} / std {} invalid",
                    bus.id, bus.injection_mean, bus.injection_std
                )));
            }
        }
        if !seen.contains(&slack) {
            return Err(Error::MissingSlack);
        }
        for (index, br) in branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !seen.contains(&end) {
                    return Err(Error::DanglingBranch {
                        index,
                        from: br.from,
                        to: br.to,
                        missing: end,
                    });
                }
            }
            if br.from == br.to {
                return Err(Error::MalformedCase(format!(
                    "branch {index} is a self-loop at bus {}",
                    br.from
                )));
            }
            if !(br.reactance.is_finite() && br.reactance > 0.0) {
                return Err(Error::InvalidReactance {
                    index,
                    from: br.from,
                    to: br.to,
                    x: br.reactance,
                });
            }
        }
        Ok(Self {
            base_mva,
            buses,
            branches,
            slack,
        })
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Sorted bus ids.
    pub fn bus_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Adjacency map, neighbors in ascending id order. Parallel branches collapse.
    pub fn adjacency(&self) -> BTreeMap<u32, BTreeSet<u32>> {
        let mut adj: BTreeMap<u32, BTreeSet<u32>> =
            self.buses.iter().map(|b| (b.id, BTreeSet::new())).collect();
        for br in &self.branches {
            adj.entry(br.from).or_default().insert(br.to);
            adj.entry(br.to).or_default().insert(br.from);
        }
        adj
    }

    pub fn neighbors(&self, bus: u32) -> Vec<u32> {
        self.adjacency()
            .remove(&bus)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default()
    }

    /// Number of connected components of the branch graph.
    pub fn components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for &start in adj.keys() {
            if !seen.insert(start) {
                continue;
            }
            count += 1;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[&u] {
                    if seen.insert(v) {
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }
}

/// Full and slack-reduced susceptance matrices with their bus index maps.
#[derive(Debug, Clone)]
pub struct SusceptanceModel {
    /// Weighted Laplacian over all buses, rows in ascending bus id order.
    pub b_full: DMatrix<f64>,
    /// `b_full` without the slack row and column.
    pub b_reduced: DMatrix<f64>,
    pub slack: u32,
    bus_ids: Vec<u32>,
    state_buses: Vec<u32>,
    full_index: BTreeMap<u32, usize>,
    state_index: BTreeMap<u32, usize>,
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

impl SusceptanceModel {
    /// Number of angle states (non-slack buses).
    pub fn n_states(&self) -> usize {
        self.state_buses.len()
    }

    /// All bus ids, ascending.
    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    /// Non-slack bus ids in state order.
    pub fn state_buses(&self) -> &[u32] {
        &self.state_buses
    }

    /// Row of `bus` in `b_reduced`; `None` for the slack bus or unknown ids.
    pub fn state_index(&self, bus: u32) -> Option<usize> {
        self.state_index.get(&bus).copied()
    }

    /// Row of `bus` in `b_full`.
    pub fn full_index(&self, bus: u32) -> Option<usize> {
        self.full_index.get(&bus).copied()
    }

    pub fn contains_bus(&self, bus: u32) -> bool {
        self.full_index.contains_key(&bus)
    }

    pub fn neighbors(&self, bus: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&bus).into_iter().flatten().copied()
    }

    pub fn are_adjacent(&self, a: u32, b: u32) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Total susceptance `sum 1/x` of the branches joining `a` and `b`.
    pub fn susceptance_between(&self, a: u32, b: u32) -> Option<f64> {
        let (i, j) = (self.full_index(a)?, self.full_index(b)?);
        self.are_adjacent(a, b).then(|| -self.b_full[(i, j)])
    }
}

/// Builds the DC susceptance matrices. Resistances and shunts are ignored.
pub fn build_susceptance(case: &NetworkCase) -> Result<SusceptanceModel> {
    let components = case.components();
    if components > 1 {
        return Err(Error::DisconnectedNetwork { components });
    }
    let bus_ids = case.bus_ids();
    let full_index: BTreeMap<u32, usize> =
        bus_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let n = bus_ids.len();
    let mut b_full = DMatrix::zeros(n, n);
    for br in &case.branches {
        let (i, j) = (full_index[&br.from], full_index[&br.to]);
        let b = 1.0 / br.reactance;
        b_full[(i, j)] -= b;
        b_full[(j, i)] -= b;
        b_full[(i, i)] += b;
        b_full[(j, j)] += b;
    }
    let state_buses: Vec<u32> = bus_ids.iter().copied().filter(|&id| id != case.slack).collect();
    let state_index = state_buses.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let keep: Vec<usize> = state_buses.iter().map(|id| full_index[id]).collect();
    let b_reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| b_full[(keep[r], keep[c])]);
    Ok(SusceptanceModel {
        b_full,
        b_reduced,
        slack: case.slack,
        bus_ids,
        state_buses,
        full_index,
        state_index,
        adjacency: case.adjacency(),
    })
}

/// One time slot of injection statistics over all buses, in ascending bus id order.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSlot {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl InjectionSlot {
    /// Independent injections with the given standard deviations.
    pub fn independent(mean: DVector<f64>, std: &DVector<f64>) -> Self {
        let covariance = DMatrix::from_diagonal(&std.map(|s| s * s));
        Self { mean, covariance }
    }
}

/// Time-varying injection statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProfile {
    pub slots: Vec<InjectionSlot>,
}

impl InjectionProfile {
    pub fn new(slots: Vec<InjectionSlot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidConfig("injection profile needs at least one slot".into()));
        }
        let dim = slots[0].mean.len();
        for (t, slot) in slots.iter().enumerate() {
            if slot.mean.len() != dim || slot.covariance.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!("injection slot {t}")));
            }
            if slot.covariance.diagonal().iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "injection slot {t} has a negative variance"
                )));
            }
        }
        Ok(Self { slots })
    }

    /// Single slot at the case's nominal injections.
    pub fn nominal(case: &NetworkCase) -> Self {
        Self::scaled(case, &[1.0])
    }

    /// One slot per scale factor; means and standard deviations are both scaled.
    pub fn scaled(case: &NetworkCase, scales: &[f64]) -> Self {
        let ids = case.bus_ids();
        let mean = DVector::from_iterator(
            ids.len(),
            ids.iter().map(|&id| case.bus(id).map_or(0.0, |b| b.injection_mean)),
        );
        let std = DVector::from_iterator(
            ids.len(),
            ids.iter().map(|&id| case.bus(id).map_or(0.0, |b| b.injection_std)),
        );
        let slots = scales
            .iter()
            .map(|&s| InjectionSlot::independent(&mean * s, &(&std * s.abs())))
            .collect();
        Self { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The same profile with every slot mean shifted by `delta`.
    pub fn shifted(&self, delta: &DVector<f64>) -> Self {
        Self {
            slots: self
                .slots
                .iter()
                .map(|s| InjectionSlot {
                    mean: &s.mean + delta,
                    covariance: s.covariance.clone(),
                })
                .collect(),
        }
    }
}

/// Gaussian distribution of the non-slack bus angles for one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePrior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub slot_index: usize,
}

impl StatePrior {
    /// Checks symmetry (1e-12 absolute) and PSD-ness (eigenvalues above `-1e-10 * max diag`).
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, slot_index: usize) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has length {n}, covariance is {:?}",
                covariance.shape()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidConfig(format!("prior covariance asymmetric by {asym:e}")));
        }
        if n > 0 {
            let max_diag = covariance.diagonal().max();
            let min_eig = covariance.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * max_diag.max(0.0) {
                return Err(Error::InvalidConfig(format!(
                    "prior covariance not PSD (min eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(Self {
            mean,
            covariance,
            slot_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Angle standard deviations, radians, in state order.
    pub fn std_devs(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Pivot ratio below which the reduced matrix is treated as singular.
const CONDITION_GUARD: f64 = 1e-14;

/// Angle prior for one slot: mean `B^-1 mu`, covariance `B^-1 Sigma B^-1`.
pub fn build_prior(model: &SusceptanceModel, slot: &InjectionSlot, slot_index: usize) -> Result<StatePrior> {
    let n_bus = model.bus_ids().len();
    if slot.mean.len() != n_bus || slot.covariance.shape() != (n_bus, n_bus) {
        return Err(Error::DimensionMismatch(format!(
            "injection slot has {} entries, network has {n_bus} buses",
            slot.mean.len()
        )));
    }
    let keep: Vec<usize> = model
        .state_buses()
        .iter()
        .map(|&id| model.full_index(id).expect("state bus in index"))
        .collect();
    let n = keep.len();
    let mu = DVector::from_fn(n, |r, _| slot.mean[keep[r]]);
    let sigma = DMatrix::from_fn(n, n, |r, c| slot.covariance[(keep[r], keep[c])]);
    if n == 0 {
        return StatePrior::new(mu, sigma, slot_index);
    }

    let chol = model
        .b_reduced
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("reduced susceptance matrix is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if (lo / hi).powi(2) < CONDITION_GUARD {
        return Err(Error::SingularMatrix(format!(
            "reduced susceptance matrix is ill-conditioned (pivot ratio {:e})",
            (lo / hi).powi(2)
        )));
    }
    let mean = chol.solve(&mu);
    let half = chol.solve(&sigma);
    let covariance = linalg::symmetrize(&chol.solve(&half.transpose()));
    StatePrior::new(mean, covariance, slot_index)
}

/// Priors for every slot of a profile.
pub fn build_priors(model: &SusceptanceModel, profile: &InjectionProfile) -> Result<Vec<StatePrior>> {
    profile
        .slots
        .iter()
        .enumerate()
        .map(|(t, slot)| build_prior(model, slot, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bus(id: u32, mean: f64) -> Bus {
        Bus {
            id,
            injection_mean: mean,
            injection_std: default_injection_std(mean),
        }
    }

    fn branch(from: u32, to: u32, x: f64) -> Branch {
        Branch { from, to, reactance: x }
    }

    pub(crate) fn path3() -> NetworkCase {
        NetworkCase::new(
            100.0,
            vec![bus(1, 0.0), bus(2, 0.3), bus(3, -0.3)],
            vec![branch(1, 2, 1.0), branch(2, 3, 1.0)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_reduced_matrix() {
        let case = NetworkCase::new(100.0, vec![bus(1, 0.0), bus(2, 1.0)], vec![branch(1, 2, 0.5)], 1).unwrap();
        let model = build_susceptance(&case).unwrap();
        assert_eq!(model.b_reduced, DMatrix::from_element(1, 1, 2.0));
        assert_eq!(model.b_full.row_sum().amax(), 0.0);
    }

    #[test]
    fn path_graph_laplacian() {
        let model = build_susceptance(&path3()).unwrap();
        assert_eq!(model.b_reduced, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert_eq!(model.state_buses(), &[2, 3]);
        assert_eq!(model.state_index(1), None);
    }

    #[test]
    fn parallel_branches_add() {
        let case = NetworkCase::new(
            100.0,
            vec![bus(1, 0.0), bus(2, 1.0)],
            vec![branch(1, 2, 0.5), branch(2, 1, 0.25)],
            1,
        )
        .unwrap();
        let model = build_susceptance(&case).unwrap();
        assert_eq!(model.b_full[(0, 1)], -6.0);
        assert_eq!(model.susceptance_between(2, 1), Some(6.0));
    }

    #[test]
    fn disconnected_islands_rejected() {
        let case = NetworkCase::new(
            100.0,
            vec![bus(1, 0.0), bus(2, 1.0), bus(3, 0.0), bus(4, 1.0)],
            vec![branch(1, 2, 0.5), branch(3, 4, 0.5)],
            1,
        )
        .unwrap();
        assert_eq!(
            build_susceptance(&case).unwrap_err(),
            Error::DisconnectedNetwork { components: 2 }
        );
    }

    #[test]
    fn validation_errors() {
        let dup = NetworkCase::new(100.0, vec![bus(1, 0.0), bus(1, 1.0)], vec![], 1);
        assert_eq!(dup.unwrap_err(), Error::DuplicateBusId(1));
        let slack = NetworkCase::new(100.0, vec![bus(1, 0.0)], vec![], 7);
        assert_eq!(slack.unwrap_err(), Error::MissingSlack);
        let dangling = NetworkCase::new(100.0, vec![bus(1, 0.0)], vec![branch(1, 99, 0.1)], 1);
        assert!(matches!(dangling.unwrap_err(), Error::DanglingBranch { missing: 99, .. }));
        let x = NetworkCase::new(100.0, vec![bus(1, 0.0), bus(2, 0.0)], vec![branch(1, 2, 0.0)], 1);
        assert!(matches!(x.unwrap_err(), Error::InvalidReactance { .. }));
    }

    #[test]
    fn scalar_prior() {
        let case = NetworkCase::new(100.0, vec![bus(1, 0.0), bus(2, 1.0)], vec![branch(1, 2, 0.5)], 1).unwrap();
        let model = build_susceptance(&case).unwrap();
        let slot = InjectionSlot {
            mean: DVector::from_vec(vec![-1.0, 1.0]),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.01])),
        };
        let prior = build_prior(&model, &slot, 0).unwrap();
        assert_relative_eq!(prior.mean[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(prior.covariance[(0, 0)], 0.0025, epsilon = 1e-15);
    }

    #[test]
    fn zero_injection_variance_gives_deterministic_prior() {
        let case = path3();
        let model = build_susceptance(&case).unwrap();
        let slot = InjectionSlot {
            mean: DVector::from_vec(vec![0.0, 0.3, -0.3]),
            covariance: DMatrix::zeros(3, 3),
        };
        let prior = build_prior(&model, &slot, 0).unwrap();
        assert_eq!(prior.covariance, DMatrix::zeros(2, 2));
    }

    #[test]
    fn path_prior_matches_explicit_inverse() {
        let model = build_susceptance(&path3()).unwrap();
        let slot = InjectionSlot {
            mean: DVector::from_vec(vec![0.0, 0.3, -0.3]),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0009, 0.0009])),
        };
        let prior = build_prior(&model, &slot, 0).unwrap();
        // Oracle: explicit dense inverse via LU.
        let inv = model.b_reduced.clone().try_inverse().unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0009, 0.0009]));
        let expected = &inv * sigma * &inv;
        assert_relative_eq!(prior.covariance, expected, max_relative = 1e-12);
        let mean = &inv * DVector::from_vec(vec![0.3, -0.3]);
        assert_relative_eq!(prior.mean, mean, max_relative = 1e-12);
        // With unit reactances the inverse is [[1,1],[1,2]].
        assert_relative_eq!(prior.covariance[(0, 0)], 0.0018, max_relative = 1e-12);
        assert_relative_eq!(prior.covariance[(1, 1)], 0.0045, max_relative = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let model = build_susceptance(&path3()).unwrap();
        let slot = InjectionSlot {
            mean: DVector::zeros(2),
            covariance: DMatrix::zeros(2, 2),
        };
        assert!(matches!(build_prior(&model, &slot, 0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scaled_profile() {
        let p = InjectionProfile::scaled(&path3(), &[1.0, 2.0]);
        assert_eq!(p.len(), 2);
        assert_relative_eq!(p.slots[1].mean[1], 0.6);
        assert_relative_eq!(p.slots[1].covariance[(1, 1)], 4.0 * 0.03f64.powi(2), max_relative = 1e-12);
    }
}
