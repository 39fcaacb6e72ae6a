//! Self-contained Gaussian-process Bayesian optimization.
//!
//! The stack has four layers, each usable on its own:
//!
//! * [`lhs`] — Latin-hypercube initial designs.
//! * [`gp`] — a Matérn-5/2 surrogate with per-dimension lengthscales,
//!   fitted by multi-start gradient ascent on the log marginal likelihood.
//! * [`acquisition`] — closed-form expected improvement and lower
//!   confidence bound, in minimization convention.
//! * [`optimizer`] — the three-phase loop (space-filling design, global
//!   expected-improvement search, trust-region confidence-bound polish)
//!   with failure penalties and deterministic seeding.
//!
//! All randomness flows through caller-provided RNGs or explicit seeds, so
//! every run is exactly reproducible.

pub mod acquisition;
pub mod gp;
pub mod lhs;
pub mod optimizer;

pub use acquisition::{acquisition_ei, acquisition_lcb};
pub use gp::{GpConfig, GpSurrogate, NoiseMode};
pub use lhs::initial_design;
pub use optimizer::{
    propose_next, run_bo, AcquisitionKind, BoConfig, BoRun, Evaluation, OptimizationProblem,
    PhaseSchedule,
};

use thiserror::Error;

/// Failures of the surrogate layer.  Evaluator failures are *not* errors —
/// the loop records and penalizes them — so this surfaces only genuine
/// numerical breakdown.
#[derive(Debug, Clone, Error)]
pub enum BayesOptError {
    /// The kernel matrix stayed non-positive-definite through the whole
    /// jitter escalation ladder.
    #[error(
        "kernel matrix is not positive definite even with jitter {max_jitter:.1e}; \
         inputs are likely duplicated with zero noise"
    )]
    IllConditioned { max_jitter: f64 },
}
