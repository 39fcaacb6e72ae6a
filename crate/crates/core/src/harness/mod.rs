//! Experiment harness: maps optimization vectors to pulse configurations,
//! drives seeded Bayesian-optimization runs against the simulator, and
//! aggregates repeats, thermal sweeps, control-noise studies, and
//! detection-angle checks into serializable records.
//!
//! Repeats and sweep points are mutually independent with disjoint seeds, so
//! any execution order (or host-level parallelism across processes) yields
//! identical records; within one optimization run, evaluations are
//! inherently sequential.

pub mod layout;
pub mod records;
pub mod runner;

pub use layout::{Decoded, FixedBase, LayoutKind, VariableLayout};
pub use records::{
    check_schema, schema_major, DetectionOutcome, DetectionReport, EvalStatus, EvaluationRecord,
    Histogram, RepeatSummary, RunRecord, SweepPoint, SCHEMA_VERSION,
};
pub use runner::{
    decode_and_evaluate, detection_study, evaluate_pulse, noisy_optimize, optimize_once,
    reevaluate_noisy, repeat_noisy_optimize, repeat_optimize, thermal_sweep, DetectionStudy,
};

use thiserror::Error;

use crate::bayesopt::BayesOptError;
use crate::dynamics::DynamicsError;
use crate::pulses::PulseError;
use crate::squeezing::SqueezingError;

/// Failures of decoding, evaluation, or orchestration.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The simulator rejected or lost the trajectory.
    #[error("evaluation failed: {0}")]
    EvaluationFailed(#[from] DynamicsError),
    /// The decoded vector produced an invalid pulse.
    #[error("pulse construction failed: {0}")]
    Pulse(#[from] PulseError),
    /// Scoring of the final covariance failed.
    #[error("squeezing metric failed: {0}")]
    Squeezing(#[from] SqueezingError),
    /// The optimizer's surrogate broke down.
    #[error("optimizer failed: {0}")]
    BayesOpt(#[from] BayesOptError),
    /// The vector's length does not match the layout.
    #[error("vector has {got} entries, layout expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    /// A bounds override entry is not a finite ordered interval.
    #[error("bounds override at index {index} is not a finite ordered (lo, hi) interval")]
    InvalidBounds { index: usize },
    /// The operation does not apply to this layout kind.
    #[error("operation not supported for layout kind {kind:?}")]
    LayoutMismatch { kind: LayoutKind },
    /// A record was written by an incompatible library generation.
    #[error("record schema {found} is not readable by this build (supports {supported})")]
    SchemaVersion { found: String, supported: String },
}
