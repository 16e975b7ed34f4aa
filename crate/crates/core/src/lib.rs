//! Entropic optimal transport with statistical inference.
//!
//! The crate solves the entropically regularized transport problem with
//! quadratic ground cost `½‖x − y‖²` between finitely supported measures,
//! extends and differentiates the optimal dual potentials, and builds
//! CLT-based confidence intervals for the transport cost and the Sinkhorn
//! divergence. A deterministic Monte Carlo harness checks coverage and the
//! `1/n` convergence rates at desk scale.
//!
//! Module map:
//!
//! * [`measures`]: discrete measures, seeded sampling, file ingestion.
//! * [`sinkhorn`]: log-domain dual solver, plan, primal/dual objectives.
//! * [`potentials`]: off-support extension, cumulant derivatives, Hölder norms.
//! * [`inference`]: plug-in variances, normal quantiles, intervals, divergence.
//! * [`oracle`]: independent reference computations used by the test suites.
//! * [`harness`]: Monte Carlo experiments and their CSV emission.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod inference;
pub mod measures;
pub mod oracle;
pub mod potentials;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use inference::{ConfidenceInterval, DivergenceValue, VarianceEstimate, VarianceKind};
pub use measures::{CompactDomain, DiscreteMeasure, SeedSpec};
pub use potentials::{ExtendedPotential, GridSpec, HolderNormEstimate, HolderOrder, MultiIndex, Side};
pub use sinkhorn::{Normalization, PotentialPair, SolveReport, SolverConfig, TransportPlan};
