//! Gaussian entropy and mutual information for linear observations of the
//! angle state.
//!
//! For `z = H theta + e` with `theta ~ N(mu, Sigma)` and `e ~ N(0, R)`,
//!
//! ```text
//! I(theta; z) = 1/2 logdet(I + R^{-1/2} H Sigma H^T R^{-1/2})
//!             = 1/2 [logdet(H Sigma H^T + R) - logdet R]
//! ```
//!
//! Quantizing `theta` with a fine step `delta` shifts both entropies by the same
//! `N ln delta`, so mutual information never depends on `delta`. It is kept in
//! [`InfoConfig`] only for reporting discrete entropies.

mod kernel;
mod objective;

pub use objective::{ObjectiveState, PlacementObjective, DEFAULT_PATTERN_CAP, DEFAULT_SAMPLED_MEMORY};

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logdet_psd, symmetrize, DEFAULT_JITTER};
use crate::measurements::{ConventionalPlan, LinearObservation, RowLabel};
use crate::network::{InjectionProfile, StatePrior};
use crate::rng::{channel_mask, UNLABELED_KEY_BASE};

pub(crate) use kernel::{half_logdet, Mixture, SparseRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Nats,
    Bits,
}

impl Unit {
    /// Converts a value in nats to this unit.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            Unit::Nats => nats,
            Unit::Bits => nats / LN_2,
        }
    }
}

/// How channel failures enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Sum over every failure pattern.
    Exact,
    /// Average over sampled patterns drawn from counter-based streams.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoConfig {
    pub unit: Unit,
    /// Angle quantization step in radians, used only by [`discrete_entropy`].
    pub quantization_step: f64,
    /// Relative diagonal regularization for covariance log-determinants.
    pub jitter: f64,
    pub failure_mode: FailureMode,
}

impl Default for InfoConfig {
    fn default() -> Self {
        Self {
            unit: Unit::Nats,
            quantization_step: 1e-4,
            jitter: DEFAULT_JITTER,
            failure_mode: FailureMode::Exact,
        }
    }
}

impl InfoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantization_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quantization step {} must be positive",
                self.quantization_step
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!("jitter {} must be nonnegative", self.jitter)));
        }
        if let FailureMode::MonteCarlo { samples: 0, .. } = self.failure_mode {
            return Err(Error::InvalidConfig("Monte Carlo needs at least one sample".into()));
        }
        Ok(())
    }
}

/// Which information gain is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// Time-averaged MI between the PMU measurements and the state.
    F1,
    /// Time-averaged MI conditioned on the conventional measurements.
    F2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub mode: ObjectiveMode,
    pub profile: InjectionProfile,
    pub conventional: Option<ConventionalPlan>,
    pub info: InfoConfig,
}

impl ObjectiveSpec {
    pub fn f1(profile: InjectionProfile, info: InfoConfig) -> Self {
        Self {
            mode: ObjectiveMode::F1,
            profile,
            conventional: None,
            info,
        }
    }

    pub fn f2(profile: InjectionProfile, conventional: ConventionalPlan, info: InfoConfig) -> Self {
        Self {
            mode: ObjectiveMode::F2,
            profile,
            conventional: Some(conventional),
            info,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.info.validate()?;
        if self.mode == ObjectiveMode::F2 && self.conventional.is_none() {
            return Err(Error::InvalidConfig("the conditional objective needs a conventional plan".into()));
        }
        Ok(())
    }
}

/// A mutual information value with its Monte Carlo standard error (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl MiEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }

    pub fn in_unit(self, unit: Unit) -> Self {
        Self {
            value: unit.from_nats(self.value),
            std_error: unit.from_nats(self.std_error),
        }
    }

    /// Mean and standard error of per-sample values.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { value: mean, std_error }
    }
}

fn check_dims(prior: &StatePrior, obs: &LinearObservation) -> Result<()> {
    if obs.n_states() != prior.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation over {} states, prior over {}",
            obs.n_states(),
            prior.dim()
        )));
    }
    if obs.noise_var.len() != obs.rows() || obs.noise_var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig("observation noise variances must be positive".into()));
    }
    Ok(())
}

/// `G = R^{-1/2} H`.
fn whitened(obs: &LinearObservation) -> DMatrix<f64> {
    let mut g = obs.h.clone();
    for (r, v) in obs.noise_var.iter().enumerate() {
        g.row_mut(r).scale_mut(1.0 / v.sqrt());
    }
    g
}

fn mi_nats(cov: &DMatrix<f64>, obs: &LinearObservation) -> Result<f64> {
    if obs.rows() == 0 {
        return Ok(0.0);
    }
    let g = whitened(obs);
    let mut a = symmetrize(&(&g * cov * g.transpose()));
    for i in 0..a.nrows() {
        a[(i, i)] += 1.0;
    }
    // I + W is at least the identity, so no regularization is needed.
    Ok(0.5 * logdet_psd(&a, 0.0)?)
}

fn posterior_nats(cov: &DMatrix<f64>, obs: &LinearObservation) -> Result<DMatrix<f64>> {
    if obs.rows() == 0 {
        return Ok(cov.clone());
    }
    let g = whitened(obs);
    let p = cov * g.transpose();
    let mut a = symmetrize(&(&g * &p));
    for i in 0..a.nrows() {
        a[(i, i)] += 1.0;
    }
    let chol = crate::linalg::cholesky(a)?;
    let gain = chol.solve(&p.transpose());
    Ok(symmetrize(&(cov - p * gain)))
}

/// `I(theta; z)` in the configured unit.
pub fn gaussian_mi(prior: &StatePrior, obs: &LinearObservation, info: &InfoConfig) -> Result<f64> {
    check_dims(prior, obs)?;
    Ok(info.unit.from_nats(mi_nats(&prior.covariance, obs)?))
}

/// Covariance of `theta` given `z`: `Sigma - Sigma H^T (H Sigma H^T + R)^{-1} H Sigma`.
pub fn posterior_cov(prior: &StatePrior, obs: &LinearObservation) -> Result<DMatrix<f64>> {
    check_dims(prior, obs)?;
    posterior_nats(&prior.covariance, obs)
}

/// The prior with its covariance replaced by the posterior covariance given `obs`.
///
/// The mean is kept: information measures depend on covariances only.
pub fn condition(prior: &StatePrior, obs: &LinearObservation) -> Result<StatePrior> {
    let cov = posterior_cov(prior, obs)?;
    Ok(StatePrior {
        mean: prior.mean.clone(),
        covariance: cov,
        slot_index: prior.slot_index,
    })
}

/// `I(theta; z_pmu | z_conv)` in the configured unit.
pub fn conditional_mi(
    prior: &StatePrior,
    pmu_obs: &LinearObservation,
    conv_obs: &LinearObservation,
    info: &InfoConfig,
) -> Result<f64> {
    check_dims(prior, conv_obs)?;
    gaussian_mi(&condition(prior, conv_obs)?, pmu_obs, info)
}

/// Differential entropy `1/2 logdet(2 pi e Sigma)` in nats.
pub fn differential_entropy(cov: &DMatrix<f64>, jitter: f64) -> Result<f64> {
    let n = cov.nrows() as f64;
    Ok(0.5 * (n * (2.0 * PI * std::f64::consts::E).ln() + logdet_psd(cov, jitter)?))
}

/// Entropy of the state quantized with step `info.quantization_step`, in the configured unit.
pub fn discrete_entropy(cov: &DMatrix<f64>, info: &InfoConfig) -> Result<f64> {
    let n = cov.nrows() as f64;
    let h = differential_entropy(cov, info.jitter)? - n * info.quantization_step.ln();
    Ok(info.unit.from_nats(h))
}

pub(crate) fn sparse_rows(obs: &LinearObservation) -> Vec<SparseRow> {
    (0..obs.rows())
        .map(|r| SparseRow::from_dense(obs.h.row(r).iter().copied(), obs.noise_var[r], obs.availability[r]))
        .collect()
}

/// Alive flags of every row of `obs` in Monte Carlo sample `sample`.
///
/// PMU rows draw from the stream of their candidate, one draw per channel
/// slot, so a row's fate is the same whichever other rows are present.
pub(crate) fn sampled_alive(obs: &LinearObservation, seed: u64, sample: u64) -> Vec<bool> {
    let mut slots: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (r, label) in obs.labels.iter().enumerate() {
        if let RowLabel::Pmu { candidate, slot, .. } = *label {
            let a = slots.entry(candidate).or_default();
            if a.len() <= slot {
                a.resize(slot + 1, 0.0);
            }
            a[slot] = obs.availability[r];
        }
    }
    let masks: BTreeMap<u32, u64> = slots
        .iter()
        .map(|(&c, a)| (c, channel_mask(seed, u64::from(c), sample, a)))
        .collect();
    obs.labels
        .iter()
        .enumerate()
        .map(|(r, label)| match *label {
            RowLabel::Pmu { candidate, slot, .. } => masks[&candidate] >> slot & 1 == 1,
            _ => channel_mask(seed, UNLABELED_KEY_BASE + r as u64, sample, &[obs.availability[r]]) == 1,
        })
        .collect()
}

/// Expected MI over channel failures, in the configured unit.
///
/// `conv_obs`, when given, is always available and the result is the
/// conditional MI. Exact mode sums over every failure pattern; Monte Carlo mode
/// averages sampled patterns and reports a standard error.
pub fn expected_mi(
    prior: &StatePrior,
    obs: &LinearObservation,
    conv_obs: Option<&LinearObservation>,
    info: &InfoConfig,
) -> Result<MiEstimate> {
    info.validate()?;
    check_dims(prior, obs)?;
    let cov = match conv_obs {
        Some(c) => {
            check_dims(prior, c)?;
            posterior_nats(&prior.covariance, c)?
        }
        None => prior.covariance.clone(),
    };
    let settled = obs.availability.iter().all(|&a| a <= 0.0 || a >= 1.0);
    if settled {
        let alive: Vec<usize> = (0..obs.rows()).filter(|&r| obs.availability[r] >= 1.0).collect();
        let value = mi_nats(&cov, &obs.select_rows(&alive))?;
        return Ok(MiEstimate::exact(value).in_unit(info.unit));
    }
    let n = cov.nrows();
    let sigma = kernel::row_major(&cov);
    let rows = sparse_rows(obs);
    let estimate = match info.failure_mode {
        FailureMode::Exact => {
            MiEstimate::exact(Mixture::build(&sigma, n, &rows, DEFAULT_PATTERN_CAP)?.expected_half_logdet()?)
        }
        FailureMode::MonteCarlo { samples, seed } => {
            let values = (0..samples as u64)
                .into_par_iter()
                .map(|s| {
                    let alive = sampled_alive(obs, seed, s);
                    let present: Vec<&SparseRow> =
                        rows.iter().zip(&alive).filter(|(r, &on)| on && !r.is_zero()).map(|(r, _)| r).collect();
                    half_logdet(&sigma, n, &present)
                })
                .collect::<Result<Vec<f64>>>()?;
            MiEstimate::from_samples(&values)
        }
    };
    Ok(estimate.in_unit(info.unit))
}

/// Time-averaged objective of a candidate selection, in the configured unit.
pub fn objective_value(
    spec: &ObjectiveSpec,
    model: &crate::network::SusceptanceModel,
    selected: &[crate::measurements::PmuCandidate],
) -> Result<MiEstimate> {
    let objective = PlacementObjective::new(spec, model, selected.to_vec())?;
    let all: Vec<usize> = (0..selected.len()).collect();
    Ok(objective.estimate(&all)?.in_unit(spec.info.unit))
}
