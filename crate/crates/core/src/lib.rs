//! Information-theoretic placement of phasor measurement units.
//!
//! Bus angles of a DC power-flow model are Gaussian when bus injections are.
//! A PMU observes a few linear functions of those angles, so the information
//! a placement yields about the state is a closed-form log-determinant. The
//! objective is monotone and submodular, and greedy selection is within
//! `1 - 1/e` of optimal.
//!
//! ```
//! use pmuplace::prelude::*;
//!
//! let case = pmuplace::fixtures::ieee14();
//! let model = build_susceptance(&case)?;
//! let cands = enumerate_candidates(&case, &CandidateOptions::default())?;
//! let spec = ObjectiveSpec::f1(InjectionProfile::nominal(&case), InfoConfig::default());
//! let objective = PlacementObjective::new(&spec, &model, cands)?;
//! let result = greedy_place(&objective, 2)?;
//! assert_eq!(result.order[0], 4);
//! # Ok::<(), pmuplace::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixtures;
pub mod info;
pub mod linalg;
pub mod measurements;
pub mod network;
pub mod placement;
pub mod rng;
pub mod verification;

pub use error::{Error, Result};

/// The types and functions most programs need.
pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::info::{
        conditional_mi, expected_mi, gaussian_mi, objective_value, posterior_cov, FailureMode, InfoConfig,
        MiEstimate, ObjectiveMode, ObjectiveSpec, PlacementObjective, Unit,
    };
    pub use crate::measurements::{
        candidate_observation, candidates_observation, conventional_observation, deg_std_to_var,
        enumerate_candidates, CandidateOptions, ConventionalPlan, LinearObservation, PmuCandidate,
    };
    pub use crate::network::{
        build_prior, build_priors, build_susceptance, load_case, parse_case, CaseFormat, InjectionProfile,
        NetworkCase, StatePrior, SusceptanceModel,
    };
    pub use crate::placement::{
        approximation_report, exhaustive_place, greedy_place, lazy_greedy_place, IncrementalObjective,
        PlacementResult, Recompute, SetFunction, DEFAULT_EXHAUSTIVE_CAP,
    };
}

/// The guide's chapters, compiled so their listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/measurements.md")]
    mod measurements {}
    #[doc = include_str!("../../../book/src/information.md")]
    mod information {}
    #[doc = include_str!("../../../book/src/placement.md")]
    mod placement {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/results.md")]
    mod results {}
}
