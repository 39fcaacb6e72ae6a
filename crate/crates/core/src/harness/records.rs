//! Serializable run artifacts: per-evaluation records, whole-run records,
//! repeat summaries, and sweep tables, all stamped with a schema version so
//! readers can reject incompatible files.

use serde::{Deserialize, Serialize};

use super::layout::VariableLayout;
use super::HarnessError;
use crate::bayesopt::PhaseSchedule;
use crate::params::SystemParams;
use crate::squeezing::DetectionAngles;

/// Version stamped into every record ("major.minor"); bump the major on any
/// field change readers cannot ignore.
pub const SCHEMA_VERSION: &str = "1.0";

/// Major component of a schema-version string, if well-formed.
pub fn schema_major(version: &str) -> Option<u64> {
    version.split('.').next()?.parse().ok()
}

/// Rejects records whose major version differs from this library's.
pub fn check_schema(version: &str) -> Result<(), HarnessError> {
    let ours = schema_major(SCHEMA_VERSION).expect("own version is well-formed");
    match schema_major(version) {
        Some(major) if major == ours => Ok(()),
        _ => Err(HarnessError::SchemaVersion {
            found: version.to_owned(),
            supported: SCHEMA_VERSION.to_owned(),
        }),
    }
}

/// Outcome of one objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Failed { message: String },
}

/// One scored point of an optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub vector: Vec<f64>,
    /// The value the optimizer saw: λ_min on success, the failure penalty
    /// otherwise.
    pub lambda_min: f64,
    /// Generalized squeezing in dB; absent for failed evaluations.
    pub s_gen: Option<f64>,
    pub status: EvalStatus,
}

/// Complete, reproducible record of one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub seed: u64,
    pub layout: VariableLayout,
    pub schedule: PhaseSchedule,
    /// System parameters the run evaluated under.
    pub params: SystemParams,
    /// Control-noise level, when the run perturbed its couplings.
    pub noise_rel_sigma: Option<f64>,
    pub evaluations: Vec<EvaluationRecord>,
    /// Best λ_min after each evaluation (monotone non-increasing).
    pub incumbent_trace: Vec<f64>,
    pub best_vector: Vec<f64>,
    pub best_lambda: f64,
    /// Generalized squeezing of the incumbent, dB (floored at zero).
    pub best_s_gen: f64,
    /// Unfloored signed squeezing of the incumbent, dB.
    pub best_s_signed: f64,
    /// For noisy runs: the incumbent re-evaluated without noise.
    pub final_noiseless_s_gen: Option<f64>,
    pub wall_time_s: f64,
}

/// Histogram of per-run best squeezing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` monotone bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Ten equal-width bins spanning the data (one degenerate bin around a
    /// constant sample).
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "histogram of an empty sample");
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.05, lo + 0.05)
        };
        let n_bins = 10usize;
        let width = (hi - lo) / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(n_bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

/// Distribution of repeated, independently seeded optimizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub schema_version: String,
    pub n_repeats: usize,
    pub seeds: Vec<u64>,
    /// Per-run best generalized squeezing, dB, in seed order.
    pub best_s_gen: Vec<f64>,
    pub min_db: f64,
    pub mean_db: f64,
    pub max_db: f64,
    /// The winning run's variable vector (the one achieving `max_db`).
    pub best_vector: Vec<f64>,
    /// The winning run's seed.
    pub best_seed: u64,
    pub histogram: Histogram,
    /// Component-wise mean of the best vectors (the "average pulse" knots).
    pub mean_vector: Vec<f64>,
    /// Five standard errors per component, matching the paper's plot bands.
    pub vector_band: Vec<f64>,
    /// Mean decoded pulse duration; absent for non-pulse layouts.
    pub mean_tau: Option<f64>,
    /// Five standard errors of the duration.
    pub tau_band: Option<f64>,
}

/// One heating-rate point of a thermal sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma_heat: f64,
    pub n_th: f64,
    pub n_0: f64,
    /// Best signed squeezing over the repeats, dB.
    pub best_db: f64,
    /// Mean signed squeezing over the repeats, dB.
    pub mean_db: f64,
    pub per_run_db: Vec<f64>,
}

/// Detection-angle search outcome on one covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionOutcome {
    /// Initial mechanical occupancy the state was propagated from.
    pub n_0: f64,
    pub angles: DetectionAngles,
    /// Best variance the angle search reached.
    pub variance: f64,
    /// The true optimum it should have reached.
    pub lambda_min: f64,
    /// `variance − lambda_min` (≈ 0 when the search succeeded).
    pub gap: f64,
    /// Whether the search stalled away from the global optimum.
    pub trapped: bool,
}

/// Side-by-side detection study on thermal and pre-cooled initial states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: String,
    pub thermal: DetectionOutcome,
    pub cooled: DetectionOutcome,
}
