//! Independent oracles for the objective and the solvers.
//!
//! - A max-k-cover instance embedded as a placement problem, where mutual
//!   information is a fixed multiple of coverage.
//! - A Monte Carlo estimate of the MMSE error covariance, checked against the
//!   analytic posterior.
//! - Random probing of monotonicity and diminishing returns.
//! - The MI / posterior log-determinant equivalence on small networks.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{gaussian_mi, posterior_cov, InfoConfig};
use crate::linalg::{logdet_psd, symmetrize};
use crate::measurements::{candidates_observation, LinearObservation, PmuCandidate, RowLabel};
use crate::network::{default_injection_std, Branch, Bus, NetworkCase, StatePrior, SusceptanceModel};
use crate::placement::{greedy_place, Recompute, SetFunction};
use crate::rng::{stream, ORACLE_KEY_BASE};

const MMSE_KEY: u64 = ORACLE_KEY_BASE;
const BOOTSTRAP_KEY: u64 = ORACLE_KEY_BASE + 1;
const PROBE_KEY: u64 = ORACLE_KEY_BASE + 2;
const CASE_KEY: u64 = ORACLE_KEY_BASE + 3;
const COVER_KEY: u64 = ORACLE_KEY_BASE + 4;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_MMSE_SAMPLES: usize = 1_000;
pub const SUBMODULARITY_TOL: f64 = 1e-9;
pub const MONOTONICITY_TOL: f64 = 1e-10;
pub const COVER_REL_TOL: f64 = 1e-9;

/// How an element covered by several selected subsets is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverForm {
    /// One measurement per covered element.
    NonDuplicating,
    /// One measurement per (subset, element) pair.
    Duplicating,
}

/// A max-k-cover instance as a placement problem.
///
/// States are `N` independent angles with variance `gamma`; candidate `m`
/// directly observes every element of its subset with noise variance `kappa`.
/// Under the non-duplicating form `MI(S) = |cover(S)| * 1/2 ln(1 + gamma/kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverInstance {
    pub universe_size: usize,
    /// Elements are `1..=universe_size`.
    pub subsets: Vec<BTreeSet<usize>>,
    pub state_variance: f64,
    pub measurement_noise: f64,
    pub form: CoverForm,
}

pub fn build_cover_instance(
    universe_size: usize,
    subsets: Vec<BTreeSet<usize>>,
    state_variance: f64,
    measurement_noise: f64,
    form: CoverForm,
) -> Result<CoverInstance> {
    if let Some(m) = subsets.iter().position(|s| s.is_empty()) {
        return Err(Error::InvalidConfig(format!("subset {} is empty", m + 1)));
    }
    if let Some(&e) = subsets.iter().flatten().find(|&&e| e == 0 || e > universe_size) {
        return Err(Error::InvalidConfig(format!("element {e} outside 1..={universe_size}")));
    }
    if !(state_variance > 0.0 && measurement_noise > 0.0) {
        return Err(Error::InvalidConfig("state variance and noise must be positive".into()));
    }
    Ok(CoverInstance {
        universe_size,
        subsets,
        state_variance,
        measurement_noise,
        form,
    })
}

/// A random instance with `m` subsets of `1..=n`, each of size 1 to `n/2 + 1`.
pub fn random_cover_instance(n: usize, m: usize, seed: u64, form: CoverForm) -> Result<CoverInstance> {
    let mut rng = stream(seed, COVER_KEY, 0);
    let elements: Vec<usize> = (1..=n).collect();
    let subsets = (0..m)
        .map(|_| {
            let size = rng.random_range(1..=n / 2 + 1);
            elements.choose_multiple(&mut rng, size).copied().collect()
        })
        .collect();
    let gamma = rng.random_range(0.5..2.0);
    let kappa = rng.random_range(0.05..1.0);
    build_cover_instance(n, subsets, gamma, kappa, form)
}

impl CoverInstance {
    /// `1/2 ln(1 + gamma / kappa)`, the information of one covered element.
    pub fn unit_information(&self) -> f64 {
        0.5 * (self.state_variance / self.measurement_noise).ln_1p()
    }

    pub fn coverage(&self, set: &[usize]) -> usize {
        set.iter().flat_map(|&m| &self.subsets[m]).collect::<BTreeSet<_>>().len()
    }

    pub fn prior(&self) -> StatePrior {
        let n = self.universe_size;
        StatePrior {
            mean: DVector::zeros(n),
            covariance: DMatrix::from_diagonal_element(n, n, self.state_variance),
            slot_index: 0,
        }
    }

    /// Observation rows produced by selecting `set` (subset indices).
    pub fn observation(&self, set: &[usize]) -> LinearObservation {
        let elements: Vec<(u32, usize)> = match self.form {
            CoverForm::NonDuplicating => {
                let covered: BTreeMap<usize, usize> =
                    set.iter().flat_map(|&m| self.subsets[m].iter().map(move |&e| (e, m))).rev().collect();
                covered.into_iter().map(|(e, m)| (m as u32 + 1, e)).collect()
            }
            CoverForm::Duplicating => set
                .iter()
                .flat_map(|&m| self.subsets[m].iter().map(move |&e| (m as u32 + 1, e)))
                .collect(),
        };
        let rows = elements.len();
        let mut h = DMatrix::zeros(rows, self.universe_size);
        for (r, &(_, e)) in elements.iter().enumerate() {
            h[(r, e - 1)] = 1.0;
        }
        LinearObservation {
            h,
            noise_var: DVector::from_element(rows, self.measurement_noise),
            availability: DVector::from_element(rows, 1.0),
            labels: elements
                .iter()
                .enumerate()
                .map(|(slot, &(candidate, e))| RowLabel::Pmu {
                    candidate,
                    slot,
                    channel: crate::measurements::Channel::Current(e as u32),
                })
                .collect(),
        }
    }
}

impl SetFunction for CoverInstance {
    fn ground_size(&self) -> usize {
        self.subsets.len()
    }

    fn candidate_id(&self, index: usize) -> u32 {
        index as u32 + 1
    }

    /// Mutual information from the dense Gaussian formula.
    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        gaussian_mi(&self.prior(), &self.observation(set), &InfoConfig::default())
    }
}

/// Plain coverage as a set function.
#[derive(Debug, Clone, Copy)]
pub struct Coverage<'a>(pub &'a CoverInstance);

impl SetFunction for Coverage<'_> {
    fn ground_size(&self) -> usize {
        self.0.subsets.len()
    }

    fn candidate_id(&self, index: usize) -> u32 {
        index as u32 + 1
    }

    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        Ok(self.0.coverage(set) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub subsets_checked: usize,
    pub max_relative_error: f64,
    pub greedy_by_mi: Vec<u32>,
    pub greedy_by_coverage: Vec<u32>,
    pub coverage_by_mi: usize,
    pub coverage_by_coverage: usize,
}

/// Checks `MI(S) = c |cover(S)|` for every `|S| <= k` and compares greedy by MI
/// with greedy by coverage.
pub fn cover_equivalence_check(instance: &CoverInstance, k: usize) -> Result<CoverReport> {
    let c = instance.unit_information();
    let m = instance.subsets.len();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for size in 0..=k.min(m) {
        for set in (0..m).combinations(size) {
            let mi = instance.evaluate(&set)?;
            let expected = c * instance.coverage(&set) as f64;
            let err = (mi - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            let err = if expected == 0.0 { mi.abs() } else { err };
            checked += 1;
            worst = worst.max(err);
            if err > COVER_REL_TOL {
                return Err(Error::EquivalenceViolation {
                    set: set.iter().map(|&s| s + 1).collect(),
                    mi,
                    expected,
                });
            }
        }
    }
    let by_mi = greedy_place(&Recompute(instance), k)?;
    let by_cov = greedy_place(&Recompute(Coverage(instance)), k)?;
    let to_idx = |ids: &[u32]| ids.iter().map(|&id| id as usize - 1).collect::<Vec<_>>();
    let report = CoverReport {
        subsets_checked: checked,
        max_relative_error: worst,
        coverage_by_mi: instance.coverage(&to_idx(&by_mi.order)),
        coverage_by_coverage: instance.coverage(&to_idx(&by_cov.order)),
        greedy_by_mi: by_mi.order,
        greedy_by_coverage: by_cov.order,
    };
    if report.coverage_by_mi != report.coverage_by_coverage {
        let set = to_idx(&report.greedy_by_mi);
        return Err(Error::EquivalenceViolation {
            set: report.greedy_by_mi.iter().map(|&id| id as usize).collect(),
            mi: instance.evaluate(&set)?,
            expected: c * report.coverage_by_coverage as f64,
        });
    }
    Ok(report)
}

/// Empirical log-determinant of the MMSE error covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmseReport {
    pub samples: usize,
    pub logdet: f64,
    /// Standard deviation of the bootstrap replicates.
    pub std_error: f64,
    /// 2.5% and 97.5% bootstrap percentiles.
    pub ci_low: f64,
    pub ci_high: f64,
    pub error_covariance: Vec<Vec<f64>>,
}

/// Symmetric square root through an eigendecomposition; tolerates singular PSD input.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Draws `(theta, z)`, applies the linear MMSE estimator and returns the
/// log-determinant of the empirical error covariance with a bootstrap interval.
///
/// Sample `s` uses its own counter-based stream, so the estimate is the same
/// for any thread count.
pub fn mmse_monte_carlo(prior: &StatePrior, obs: &LinearObservation, samples: usize, seed: u64) -> Result<MmseReport> {
    let n = prior.dim();
    if samples < MIN_MMSE_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "the MMSE oracle needs at least {MIN_MMSE_SAMPLES} samples"
        )));
    }
    if samples <= n {
        return Err(Error::DegenerateSampleCovariance(format!("{samples} samples for {n} states")));
    }
    if obs.n_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "observation over {} states, prior over {n}",
            obs.n_states()
        )));
    }
    let m = obs.rows();
    let sigma = &prior.covariance;
    let root = psd_sqrt(sigma);
    let noise_sd = obs.noise_var.map(f64::sqrt);
    // Gain K = Sigma H^T (H Sigma H^T + R)^{-1}.
    let gain = if m == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let s = symmetrize(&(&obs.h * sigma * obs.h.transpose())) + obs.noise_cov();
        let chol = crate::linalg::cholesky(s)?;
        chol.solve(&(&obs.h * sigma)).transpose()
    };
    let errors: Vec<DVector<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, MMSE_KEY, s);
            let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = DVector::from_fn(m, |r, _| noise_sd[r] * rng.sample::<f64, _>(StandardNormal));
            let theta = &prior.mean + &root * xi;
            let z = &obs.h * &theta + e;
            let estimate = &prior.mean + &gain * (z - &obs.h * &prior.mean);
            theta - estimate
        })
        .collect();
    let covariance = |idx: &mut dyn Iterator<Item = usize>| {
        let mut c = DMatrix::zeros(n, n);
        for i in idx {
            c.ger(1.0, &errors[i], &errors[i], 1.0);
        }
        c / samples as f64
    };
    let degenerate = |e: Error| Error::DegenerateSampleCovariance(e.to_string());
    let cov = covariance(&mut (0..samples));
    let logdet = logdet_psd(&cov, 0.0).map_err(degenerate)?;
    let mut replicates = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, BOOTSTRAP_KEY, b);
            let mut idx = (0..samples).map(|_| rng.random_range(0..samples));
            logdet_psd(&covariance(&mut idx), 0.0).map_err(degenerate)
        })
        .collect::<Result<Vec<f64>>>()?;
    replicates.sort_by(f64::total_cmp);
    let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let var = replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (replicates.len() - 1) as f64;
    let pick = |q: f64| replicates[((q * replicates.len() as f64) as usize).min(replicates.len() - 1)];
    Ok(MmseReport {
        samples,
        logdet,
        std_error: var.sqrt(),
        ci_low: pick(0.025),
        ci_high: pick(0.975),
        error_covariance: (0..n).map(|i| cov.row(i).iter().copied().collect()).collect(),
    })
}

/// `-F`, a non-submodular control for [`submodularity_probe`].
#[derive(Debug, Clone, Copy)]
pub struct Negated<F>(pub F);

impl<F: SetFunction> SetFunction for Negated<F> {
    fn ground_size(&self) -> usize {
        self.0.ground_size()
    }

    fn candidate_id(&self, index: usize) -> u32 {
        self.0.candidate_id(index)
    }

    fn evaluate(&self, set: &[usize]) -> Result<f64> {
        Ok(-self.0.evaluate(set)?)
    }
}

/// One sampled chain `A ⊆ B`, `s ∉ B`, as candidate ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCase {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub s: u32,
    pub gain_a: f64,
    pub gain_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub distinct_sets: usize,
    pub submodularity_violations: usize,
    pub monotonicity_violations: usize,
    /// Largest `gain_b - gain_a` seen (positive means a violation beyond tolerance is possible).
    pub worst_submodularity: f64,
    /// Smallest `gain_b` seen.
    pub worst_monotonicity: f64,
    pub worst_case: Option<ProbeCase>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.submodularity_violations == 0 && self.monotonicity_violations == 0
    }
}

/// Samples `trials` chains `A ⊆ B`, `s ∉ B` with `|B| + 1 <= max_size` and checks
/// `F(A+s) - F(A) >= F(B+s) - F(B) - 1e-9` and `F(B+s) - F(B) >= -1e-10`.
///
/// Every distinct set is evaluated once.
pub fn submodularity_probe<F: SetFunction>(f: &F, trials: usize, seed: u64, max_size: usize) -> Result<ProbeReport> {
    let n = f.ground_size();
    if trials == 0 {
        return Err(Error::InvalidConfig("the probe needs at least one trial".into()));
    }
    if n == 0 || max_size == 0 {
        return Err(Error::InvalidConfig("the probe needs a nonempty ground set and max_size >= 1".into()));
    }
    let chains: Vec<(Vec<usize>, Vec<usize>, usize)> = (0..trials as u64)
        .map(|t| {
            let mut rng = stream(seed, PROBE_KEY, t);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let b_len = rng.random_range(0..max_size.min(n));
            let s = order[b_len];
            let mut b: Vec<usize> = order[..b_len].to_vec();
            let mut a: Vec<usize> = b.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
            a.sort_unstable();
            b.sort_unstable();
            (a, b, s)
        })
        .collect();
    let with = |set: &[usize], s: usize| -> Vec<usize> {
        let mut v = set.to_vec();
        v.push(s);
        v.sort_unstable();
        v
    };
    let distinct: BTreeSet<Vec<usize>> = chains
        .iter()
        .flat_map(|(a, b, s)| [a.clone(), with(a, *s), b.clone(), with(b, *s)])
        .collect();
    let distinct: Vec<Vec<usize>> = distinct.into_iter().collect();
    let values = distinct
        .par_iter()
        .map(|set| f.evaluate(set))
        .collect::<Result<Vec<f64>>>()?;
    let memo: BTreeMap<&[usize], f64> = distinct.iter().map(Vec::as_slice).zip(values).collect();
    let ids = |set: &[usize]| set.iter().map(|&i| f.candidate_id(i)).collect::<Vec<_>>();
    let mut report = ProbeReport {
        trials,
        distinct_sets: distinct.len(),
        submodularity_violations: 0,
        monotonicity_violations: 0,
        worst_submodularity: f64::NEG_INFINITY,
        worst_monotonicity: f64::INFINITY,
        worst_case: None,
    };
    for (a, b, s) in &chains {
        let gain_a = memo[with(a, *s).as_slice()] - memo[a.as_slice()];
        let gain_b = memo[with(b, *s).as_slice()] - memo[b.as_slice()];
        let excess = gain_b - gain_a;
        if excess > SUBMODULARITY_TOL {
            report.submodularity_violations += 1;
        }
        if gain_b < -MONOTONICITY_TOL {
            report.monotonicity_violations += 1;
        }
        if excess > report.worst_submodularity {
            report.worst_submodularity = excess;
            report.worst_case = Some(ProbeCase {
                a: ids(a),
                b: ids(b),
                s: f.candidate_id(*s),
                gain_a,
                gain_b,
            });
        }
        report.worst_monotonicity = report.worst_monotonicity.min(gain_b);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DOptimalityReport {
    pub budget: usize,
    /// Best set by mutual information, candidate ids ascending.
    pub by_mi: Vec<u32>,
    /// Best set by posterior log-determinant.
    pub by_logdet: Vec<u32>,
    pub agree: bool,
}

/// Compares the `k`-subset maximizing MI with the one minimizing the posterior
/// log-determinant, each found by enumeration with ties to the smallest ids.
///
/// All channels are taken as available.
pub fn d_optimality_check(
    prior: &StatePrior,
    model: &SusceptanceModel,
    cands: &[PmuCandidate],
    k: usize,
    jitter: f64,
) -> Result<DOptimalityReport> {
    let mut cands = cands.to_vec();
    cands.sort_by_key(|c| c.id);
    let info = InfoConfig::default();
    let mut best_mi: Option<(f64, Vec<u32>)> = None;
    let mut best_ld: Option<(f64, Vec<u32>)> = None;
    for set in (0..cands.len()).combinations(k.min(cands.len())) {
        let chosen: Vec<PmuCandidate> = set.iter().map(|&i| cands[i].clone()).collect();
        let obs = candidates_observation(&chosen, model)?.always_available();
        let ids: Vec<u32> = chosen.iter().map(|c| c.id).collect();
        let mi = gaussian_mi(prior, &obs, &info)?;
        let ld = logdet_psd(&posterior_cov(prior, &obs)?, jitter)?;
        if best_mi.as_ref().is_none_or(|b| mi > b.0) {
            best_mi = Some((mi, ids.clone()));
        }
        if best_ld.as_ref().is_none_or(|b| ld < b.0) {
            best_ld = Some((ld, ids));
        }
    }
    let by_mi = best_mi.map(|b| b.1).unwrap_or_default();
    let by_logdet = best_ld.map(|b| b.1).unwrap_or_default();
    Ok(DOptimalityReport {
        budget: k,
        agree: by_mi == by_logdet,
        by_mi,
        by_logdet,
    })
}

/// A random connected network with `n` buses, slack 1.
///
/// A random spanning tree plus about `n/2` extra branches, reactances in
/// `[0.05, 0.5)` and injections balanced around a generating slack.
pub fn random_case(n: usize, seed: u64) -> Result<NetworkCase> {
    if n < 2 {
        return Err(Error::InvalidConfig("a random case needs at least two buses".into()));
    }
    let mut rng = stream(seed, CASE_KEY, n as u64);
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for b in 2..=n as u32 {
        let a = rng.random_range(1..b);
        edges.insert((a, b));
    }
    for _ in 0..n / 2 {
        let a = rng.random_range(1..=n as u32);
        let b = rng.random_range(1..=n as u32);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let loads: Vec<f64> = (1..n).map(|_| -rng.random_range(0.05..0.6)).collect();
    let slack_gen = -loads.iter().sum::<f64>();
    let buses = std::iter::once(slack_gen)
        .chain(loads)
        .enumerate()
        .map(|(k, mean)| Bus {
            id: k as u32 + 1,
            injection_mean: mean,
            injection_std: default_injection_std(mean),
        })
        .collect();
    let branches = edges
        .into_iter()
        .map(|(from, to)| Branch {
            from,
            to,
            reactance: rng.random_range(0.05..0.5),
        })
        .collect();
    NetworkCase::new(100.0, buses, branches, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measurements::{enumerate_candidates, CandidateOptions};
    use crate::network::{build_prior, build_susceptance, InjectionProfile};

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn empty_and_full_cover() {
        let inst = build_cover_instance(4, vec![set(&[1, 2]), set(&[3, 4])], 1.0, 0.5, CoverForm::NonDuplicating).unwrap();
        assert_eq!(inst.evaluate(&[]).unwrap(), 0.0);
        let full = inst.evaluate(&[0, 1]).unwrap();
        assert!((full - 4.0 * 0.5 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cover_validation() {
        assert!(build_cover_instance(3, vec![set(&[])], 1.0, 1.0, CoverForm::NonDuplicating).is_err());
        assert!(build_cover_instance(3, vec![set(&[4])], 1.0, 1.0, CoverForm::NonDuplicating).is_err());
        assert!(build_cover_instance(3, vec![set(&[1])], 0.0, 1.0, CoverForm::NonDuplicating).is_err());
    }

    #[test]
    fn overlapping_cover_passes_and_duplicating_fails() {
        let subsets = vec![set(&[1, 2, 3]), set(&[3, 4]), set(&[4, 5, 6]), set(&[1, 6])];
        let ok = build_cover_instance(6, subsets.clone(), 1.3, 0.2, CoverForm::NonDuplicating).unwrap();
        let rep = cover_equivalence_check(&ok, 3).unwrap();
        assert_eq!(rep.subsets_checked, 1 + 4 + 6 + 4);
        assert_eq!(rep.coverage_by_mi, rep.coverage_by_coverage);
        let dup = build_cover_instance(6, subsets, 1.3, 0.2, CoverForm::Duplicating).unwrap();
        assert!(matches!(cover_equivalence_check(&dup, 2), Err(Error::EquivalenceViolation { .. })));
    }

    #[test]
    fn scalar_mmse() {
        let prior = StatePrior::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 1.0), 0).unwrap();
        let obs = LinearObservation {
            h: DMatrix::from_element(1, 1, 1.0),
            noise_var: DVector::from_element(1, 1.0),
            availability: DVector::from_element(1, 1.0),
            labels: vec![RowLabel::Injection { bus: 1 }],
        };
        let rep = mmse_monte_carlo(&prior, &obs, 20_000, 3).unwrap();
        let var = rep.error_covariance[0][0];
        assert!((rep.logdet - 0.5f64.ln()).abs() < 3.0 * rep.std_error, "{rep:?}");
        assert!((var - 0.5).abs() < 0.03, "{var}");
        assert!(rep.ci_low < rep.logdet && rep.logdet < rep.ci_high);
    }

    #[test]
    fn mmse_rejects_small_samples() {
        let prior = StatePrior::new(DVector::zeros(2), DMatrix::identity(2, 2), 0).unwrap();
        let obs = LinearObservation::empty(2);
        assert!(matches!(mmse_monte_carlo(&prior, &obs, 10, 0), Err(Error::InvalidConfig(_))));
        let singular = StatePrior::new(DVector::zeros(2), DMatrix::zeros(2, 2), 0).unwrap();
        assert!(matches!(
            mmse_monte_carlo(&singular, &obs, 1000, 0),
            Err(Error::DegenerateSampleCovariance(_))
        ));
    }

    #[test]
    fn probe_detects_negation() {
        let inst = random_cover_instance(8, 5, 4, CoverForm::NonDuplicating).unwrap();
        let good = submodularity_probe(&inst, 300, 1, 5).unwrap();
        assert!(good.passed(), "{good:?}");
        let bad = submodularity_probe(&Negated(&inst), 300, 1, 5).unwrap();
        assert!(bad.monotonicity_violations > 0);
        assert!(bad.submodularity_violations > 0);
    }

    #[test]
    fn d_optimality_on_path() {
        let case = fixtures::path3();
        let model = build_susceptance(&case).unwrap();
        let prior = build_prior(&model, &InjectionProfile::nominal(&case).slots[0], 0).unwrap();
        let cands = enumerate_candidates(&case, &CandidateOptions::default()).unwrap();
        for k in 0..=3 {
            let rep = d_optimality_check(&prior, &model, &cands, k, 0.0).unwrap();
            assert!(rep.agree, "{rep:?}");
            assert_eq!(rep.by_mi.len(), k.min(cands.len()));
        }
    }

    #[test]
    fn random_cases_are_connected_and_reproducible() {
        for seed in 0..20 {
            let c = random_case(3 + seed as usize % 6, seed).unwrap();
            assert_eq!(c.components(), 1);
            assert_eq!(c, random_case(3 + seed as usize % 6, seed).unwrap());
            assert!(build_susceptance(&c).is_ok());
        }
    }
}
