//! Simulation and optimization of pulsed two-mode optomechanical squeezing.
//!
//! The library propagates the 6×6 covariance matrix of a linearized
//! optomechanical system (cavity ⊗ mechanics ⊗ detected output mode) through
//! a matrix Lyapunov equation, scores the resulting mechanics⊗output state by
//! its generalized two-mode squeezing, and searches pulse-shape, detuning,
//! measurement-profile, and detection-angle controls with a self-contained
//! Gaussian-process Bayesian optimizer.
//!
//! Module map:
//! - [`params`] — physical system parameters and derived rates.
//! - [`pulses`] — piecewise-linear control profiles, gain bookkeeping,
//!   control-noise injection.
//! - [`dynamics`] — drift/diffusion matrices, the adaptive Lyapunov
//!   integrator, and the analytic rotating-wave solver for constant pulses.
//! - [`squeezing`] — eigenvalue and detection-angle squeezing metrics.
//! - [`bayesopt`] — Gaussian-process surrogate, acquisitions, and the
//!   three-phase optimization loop.
//! - [`harness`] — variable layouts mapping optimizer vectors to pulse
//!   configurations, plus the repeatable experiment drivers.
//!
//! All rates are expressed in units of the optical linewidth κ; time in 1/κ.

pub mod bayesopt;
pub mod dynamics;
pub mod harness;
pub mod params;
pub mod pulses;
pub mod squeezing;
