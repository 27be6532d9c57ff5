//! Greedy, lazy greedy and exhaustive maximization of a set function under a
//! cardinality budget.
//!
//! Solvers work on candidate indices and break ties toward the lowest
//! candidate id, so every run is deterministic whatever the thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of subsets scored by [`exhaustive_place`].
pub const DEFAULT_EXHAUSTIVE_CAP: f64 = 2e6;
/// Greedy approximation bound `1 - 1/e`.
pub const GREEDY_BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;
const PROGRESS_EVERY: u64 = 100_000;

/// A set function over the ground set `0..ground_size()`.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;
    /// External id of element `index`, used for tie-breaking and reports.
    fn candidate_id(&self, index: usize) -> u32;
    fn evaluate(&self, set: &[usize]) -> Result<f64>;
}

impl<F: SetFunction + ?Sized> SetFunction for &F {
    fn ground_size(&self) -> usize {
        (**self).ground_size()
    }
    fn candidate_id(&self, index: usize) -> u32 {
        (**self).candidate_id(index)
    }
    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        (**self).evaluate(set)
    }
}

/// A set function that can score additions to a growing set.
pub trait IncrementalObjective: SetFunction {
    type State: Clone + Send + Sync;
    /// State of the empty set.
    fn start(&self) -> Result<Self::State>;
    fn value(&self, state: &Self::State) -> f64;
    /// `F(S + index) - F(S)`.
    fn gain(&self, state: &Self::State, index: usize) -> Result<f64>;
    fn commit(&self, state: &mut Self::State, index: usize, gain: f64) -> Result<()>;
}

/// Adapter that scores additions by evaluating whole sets.
#[derive(Debug, Clone, Copy)]
pub struct Recompute<F>(pub F);

#[derive(Debug, Clone, PartialEq)]
pub struct RecomputeState {
    pub set: Vec<usize>,
    pub value: f64,
}

impl<F: SetFunction> SetFunction for Recompute<F> {
    fn ground_size(&self) -> usize {
        self.0.ground_size()
    }
    fn candidate_id(&self, index: usize) -> u32 {
        self.0.candidate_id(index)
    }
    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        self.0.evaluate(set)
    }
}

impl<F: SetFunction> IncrementalObjective for Recompute<F> {
    type State = RecomputeState;

    fn start(&self) -> Result<RecomputeState> {
        Ok(RecomputeState {
            set: Vec::new(),
            value: self.0.evaluate(&[])?,
        })
    }

    fn value(&self, state: &RecomputeState) -> f64 {
        state.value
    }

    fn gain(&self, state: &RecomputeState, index: usize) -> Result<f64> {
        let mut with = state.set.clone();
        with.push(index);
        Ok(self.0.evaluate(&with)? - state.value)
    }

    fn commit(&self, state: &mut RecomputeState, index: usize, gain: f64) -> Result<()> {
        state.set.push(index);
        state.value += gain;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Greedy,
    LazyGreedy,
    Exhaustive,
}

/// Outcome of a placement run. Values are in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    /// Candidate ids in selection order (ascending for exhaustive search).
    pub order: Vec<u32>,
    /// Objective after each step; exhaustive search records only the final value.
    pub values: Vec<f64>,
    /// Gain of each step; empty for exhaustive search.
    pub marginals: Vec<f64>,
    pub budget: usize,
    pub solver: Solver,
    /// Number of objective or gain evaluations performed.
    pub evaluations: u64,
}

impl PlacementResult {
    /// Objective of the full selection; 0 when nothing was selected.
    pub fn value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Objective after `k` greedy steps.
    pub fn value_at(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(0.0),
            _ => self.values.get(k - 1).copied(),
        }
    }

    /// Selected ids, ascending.
    pub fn set(&self) -> Vec<u32> {
        self.order.iter().copied().sorted().collect()
    }

    /// Selected ids after `k` steps, ascending.
    pub fn prefix_set(&self, k: usize) -> Vec<u32> {
        self.order[..k.min(self.order.len())].iter().copied().sorted().collect()
    }
}

/// Total order on `(gain, id)`: larger gain first, then lower id.
fn better(a: (f64, u32), b: (f64, u32)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn check_finite(gain: f64, id: u32) -> Result<f64> {
    if gain.is_finite() {
        Ok(gain)
    } else {
        Err(Error::NotPositiveDefinite(format!("gain of candidate {id} is {gain}")))
    }
}

/// Greedy maximization: each step adds the element with the largest gain.
pub fn greedy_place<F: IncrementalObjective>(f: &F, budget: usize) -> Result<PlacementResult> {
    let n = f.ground_size();
    let steps = budget.min(n);
    let mut state = f.start()?;
    let mut taken = vec![false; n];
    let mut result = PlacementResult {
        order: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        marginals: Vec::with_capacity(steps),
        budget,
        solver: Solver::Greedy,
        evaluations: 0,
    };
    for _ in 0..steps {
        let open: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let gains = open
            .par_iter()
            .map(|&i| check_finite(f.gain(&state, i)?, f.candidate_id(i)))
            .collect::<Result<Vec<f64>>>()?;
        result.evaluations += open.len() as u64;
        let (best, gain) = open
            .iter()
            .zip(&gains)
            .map(|(&i, &g)| (i, g))
            .reduce(|a, b| {
                if better((b.1, f.candidate_id(b.0)), (a.1, f.candidate_id(a.0))) {
                    b
                } else {
                    a
                }
            })
            .expect("steps <= ground size");
        f.commit(&mut state, best, gain)?;
        taken[best] = true;
        log::debug!("greedy picked {} (gain {gain:.6e})", f.candidate_id(best));
        result.order.push(f.candidate_id(best));
        result.marginals.push(gain);
        result.values.push(f.value(&state));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    bound: f64,
    id: u32,
    index: usize,
    /// Step at which `bound` was computed.
    step: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(other.id.cmp(&self.id))
    }
}

/// Slack on stale bounds: an entry is trusted to lose only when its bound is
/// below the best fresh gain by more than this.
fn lazy_tolerance(gain: f64) -> f64 {
    1e-9 * gain.abs().max(1.0)
}

/// Greedy with stale upper bounds on gains. Returns the same selection and
/// values as [`greedy_place`] for submodular objectives while scoring fewer
/// candidates.
///
/// A candidate is selected only once every stale bound within a small
/// tolerance of its fresh gain has been refreshed, and fresh gains are
/// compared with the same rule as the plain greedy.
pub fn lazy_greedy_place<F: IncrementalObjective>(f: &F, budget: usize) -> Result<PlacementResult> {
    let n = f.ground_size();
    let steps = budget.min(n);
    let mut state = f.start()?;
    let mut result = PlacementResult {
        order: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        marginals: Vec::with_capacity(steps),
        budget,
        solver: Solver::LazyGreedy,
        evaluations: 0,
    };
    if steps == 0 {
        return Ok(result);
    }
    let initial = (0..n)
        .into_par_iter()
        .map(|i| check_finite(f.gain(&state, i)?, f.candidate_id(i)))
        .collect::<Result<Vec<f64>>>()?;
    result.evaluations += n as u64;
    let mut heap: BinaryHeap<Entry> = initial
        .iter()
        .enumerate()
        .map(|(index, &bound)| Entry {
            bound,
            id: f.candidate_id(index),
            index,
            step: 0,
        })
        .collect();
    for step in 0..steps {
        loop {
            let top = *heap.peek().expect("heap holds every open candidate");
            let stale: Vec<Entry> = if top.step == step {
                let floor = top.bound - lazy_tolerance(top.bound);
                heap.iter().filter(|e| e.step != step && e.bound >= floor).copied().collect()
            } else {
                vec![top]
            };
            if stale.is_empty() {
                break;
            }
            let fresh = stale
                .par_iter()
                .map(|e| check_finite(f.gain(&state, e.index)?, e.id))
                .collect::<Result<Vec<f64>>>()?;
            result.evaluations += stale.len() as u64;
            heap.retain(|e| !stale.iter().any(|s| s.index == e.index));
            heap.extend(stale.iter().zip(fresh).map(|(e, bound)| Entry { bound, step, ..*e }));
        }
        let pick = heap.pop().expect("nonempty");
        f.commit(&mut state, pick.index, pick.bound)?;
        log::debug!("lazy greedy picked {} (gain {:.6e})", pick.id, pick.bound);
        result.order.push(pick.id);
        result.marginals.push(pick.bound);
        result.values.push(f.value(&state));
    }
    Ok(result)
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Best subset of size `min(budget, n)` by enumeration.
///
/// Ties go to the lexicographically smallest sorted id list. Fails with
/// [`Error::SearchSpaceTooLarge`] when more than `cap` subsets would be scored.
pub fn exhaustive_place<F: SetFunction>(f: &F, budget: usize, cap: f64) -> Result<PlacementResult> {
    let n = f.ground_size();
    let k = budget.min(n);
    let size = binomial(n, k);
    if size > cap {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }
    let done = AtomicU64::new(0);
    let best = (0..n)
        .combinations(k)
        .par_bridge()
        .map(|set| {
            let value = f.evaluate(&set)?;
            let count = done.fetch_add(1, AtomicOrdering::Relaxed) + 1;
            if count.is_multiple_of(PROGRESS_EVERY) {
                log::info!("exhaustive search: {count} of {size} subsets scored");
            }
            let ids: Vec<u32> = set.iter().map(|&i| f.candidate_id(i)).sorted().collect();
            Ok((value, ids))
        })
        .try_reduce_with(|a, b| {
            let keep_b = match b.0.total_cmp(&a.0) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => b.1 < a.1,
            };
            Ok(if keep_b { b } else { a })
        })
        .transpose()?;
    let (value, order) = best.unwrap_or((0.0, Vec::new()));
    Ok(PlacementResult {
        order,
        values: vec![value],
        marginals: Vec::new(),
        budget,
        solver: Solver::Exhaustive,
        evaluations: done.into_inner(),
    })
}

/// Greedy value over the optimum at one budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub budget: usize,
    pub greedy: f64,
    pub optimal: f64,
    pub ratio: f64,
    /// Set when the ratio falls below `1 - 1/e`.
    pub violates_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub entries: Vec<RatioEntry>,
    pub min_ratio: f64,
    pub violations: usize,
}

/// Compares a greedy run against exhaustive optima at several budgets.
///
/// A zero optimum gives ratio 1. Budgets beyond the greedy run are skipped.
pub fn approximation_report(greedy: &PlacementResult, optima: &[PlacementResult]) -> ApproximationReport {
    let entries: Vec<RatioEntry> = optima
        .iter()
        .filter_map(|opt| {
            let k = opt.order.len();
            let g = greedy.value_at(k)?;
            let o = opt.value();
            let ratio = if o > 0.0 { g / o } else { 1.0 };
            Some(RatioEntry {
                budget: k,
                greedy: g,
                optimal: o,
                ratio,
                violates_bound: ratio < GREEDY_BOUND,
            })
        })
        .collect();
    ApproximationReport {
        min_ratio: entries.iter().map(|e| e.ratio).fold(1.0, f64::min),
        violations: entries.iter().filter(|e| e.violates_bound).count(),
        entries,
    }
}
