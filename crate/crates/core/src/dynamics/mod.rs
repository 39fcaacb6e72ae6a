//! Drift/diffusion matrices and covariance propagation.
//!
//! The state is the 6×6 symmetric covariance matrix U over the quadrature
//! ordering (X_c, Y_c, X_m, Y_m, 𝒳_out, 𝒴_out) — cavity, mechanics, and the
//! accumulated output temporal mode — evolved by the matrix Lyapunov
//! equation dU/dt = B U + U Bᵀ + F.  Two solvers are provided:
//!
//! - [`integrate_covariance`]: adaptive Dormand–Prince propagation of the
//!   full time-dependent system, valid at any mechanical frequency.
//! - [`rwa_covariance_constant`]: deterministic matrix-exponential solution
//!   of the rotating-wave system for constant coupling on the blue sideband.
//!
//! The printed drift/diffusion constructors ([`drift_matrix`],
//! [`extended_drift`], [`extended_diffusion`]) are expressed in the drive
//! frame, where both the cavity and mechanical quadratures rotate rapidly.
//! For propagation the integrator re-expresses the same dynamics in the
//! co-rotating envelope frame (see `integrate` module docs), which is where
//! a slowly varying measurement profile f_out(t) is physically defined.

mod covariance;
mod integrate;
mod matrices;
mod rwa;

pub use covariance::{
    extract_bipartite, initial_covariance, symplectic_eigenvalues, BipartiteCovariance,
    ExtendedCovariance,
};
pub use integrate::{
    integrate_covariance, integrate_covariance_with, IntegrationOutput, IntegratorConfig,
};
pub use matrices::{drift_matrix, extended_diffusion, extended_drift, rwa_envelope_matrices};
pub use rwa::{
    optimal_fout_constant, rwa_covariance_constant, rwa_covariance_constant_with, RwaConfig,
};

use thiserror::Error;

/// Failures of the covariance solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    /// A covariance entry exceeded the overflow guard — the practical
    /// signature of excessive amplitude gain.
    #[error("integration diverged at t = {t:.6}: |U| reached {magnitude:.3e}")]
    IntegrationDiverged { t: f64, magnitude: f64 },
    /// The adaptive integrator exceeded its step budget.
    #[error("integration exceeded {max_steps} steps at t = {t:.6}")]
    MaxStepsExceeded { t: f64, max_steps: u64 },
    /// The step size underflowed below machine resolution.
    #[error("step size underflow at t = {t:.6}")]
    StepSizeUnderflow { t: f64 },
    /// A matrix exponential in the analytic solver exceeded the overflow guard.
    #[error("matrix exponential overflow in the analytic solver (|Phi| = {magnitude:.3e})")]
    GainOverflow { magnitude: f64 },
    /// An input covariance matrix was not symmetric within tolerance.
    #[error("matrix asymmetry {asymmetry:.3e} exceeds tolerance {tol:.1e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },
    /// A pulse profile could not be evaluated.
    #[error("pulse error: {0}")]
    Pulse(#[from] crate::pulses::PulseError),
}
