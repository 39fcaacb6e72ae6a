//! Experiment orchestration: vector evaluation, seeded optimization runs,
//! repeat studies, thermal sweeps, control-noise studies, and the
//! detection-angle reliability check.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layout::{Decoded, VariableLayout};
use super::records::{
    DetectionOutcome, DetectionReport, EvalStatus, EvaluationRecord, Histogram, RepeatSummary,
    RunRecord, SweepPoint, SCHEMA_VERSION,
};
use super::HarnessError;
use crate::bayesopt::{run_bo, BoConfig, BoRun, OptimizationProblem, PhaseSchedule};
use crate::dynamics::{initial_covariance, integrate_covariance};
use crate::params::SystemParams;
use crate::pulses::PulseConfig;
use crate::squeezing::{
    angle_landscape, detect_min_variance, generalized_squeezing, min_eigenvalue, signed_squeezing,
    DetectionSearch,
};

/// Decorrelates the control-noise stream from the optimizer's own draws.
const NOISE_SEED_SALT: u64 = 0x6e6f_6973_65;

/// Occupancy floor used by thermal sweeps for numerical stability.
const SWEEP_COOLED_N0: f64 = 100.0;

/// Pre-cooled occupancy forced when the heating rate reaches the optical
/// scale (Γ ≥ κ), where the thermal initial state overflows the integrator.
const HIGH_GAMMA_N0: f64 = 1e4;

/// A search stalls ("trapped") when its best variance exceeds the true
/// optimum by more than this, relative to max(1, λ_min).
const TRAPPED_REL_TOL: f64 = 1e-6;

/// Integrates the pulse from the thermal initial state and scores it:
/// (λ_min of the mechanics⊗output covariance, generalized squeezing in dB).
pub fn evaluate_pulse(
    params: &SystemParams,
    pulse: &PulseConfig,
) -> Result<(f64, f64), HarnessError> {
    let u0 = initial_covariance(params);
    let u = integrate_covariance(params, pulse, &u0)?;
    let lambda = min_eigenvalue(&u.bipartite())?;
    Ok((lambda, generalized_squeezing(lambda)?))
}

/// Decodes one optimization vector and scores it; see [`evaluate_pulse`].
///
/// Only pulse layouts evaluate directly — detection-angle vectors need a
/// covariance matrix to score against (see [`detection_study`]).
pub fn decode_and_evaluate(
    layout: &VariableLayout,
    vector: &[f64],
    params: &SystemParams,
) -> Result<(f64, f64), HarnessError> {
    match layout.decode(vector, params)? {
        Decoded::Pulse(pulse) => evaluate_pulse(params, &pulse),
        Decoded::Angles { .. } => Err(HarnessError::LayoutMismatch {
            kind: layout.kind(),
        }),
    }
}

/// Runs one seeded Bayesian-optimization search over the layout's bounds,
/// minimizing λ_min.
pub fn optimize_once(
    layout: &VariableLayout,
    params: &SystemParams,
    schedule: &PhaseSchedule,
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let mut objective = |x: &DVector<f64>| {
        decode_and_evaluate(layout, x.as_slice(), params)
            .map(|(lambda, _)| lambda)
            .map_err(|e| e.to_string())
    };
    let start = Instant::now();
    let run = run_bo(
        &mut OptimizationProblem {
            bounds: layout.bounds(),
            objective: &mut objective,
        },
        schedule,
        &BoConfig::default(),
        seed,
    )?;
    Ok(build_record(
        layout,
        params,
        schedule,
        seed,
        run,
        start.elapsed().as_secs_f64(),
        None,
        None,
    ))
}

/// Like [`optimize_once`], but every evaluation perturbs the decoded
/// coupling with control noise before simulating; the returned record's
/// `final_noiseless_s_gen` re-scores the incumbent without noise.
///
/// With `rel_sigma = 0` the run is identical to [`optimize_once`] under the
/// same seed.
pub fn noisy_optimize(
    layout: &VariableLayout,
    params: &SystemParams,
    schedule: &PhaseSchedule,
    rel_sigma: f64,
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SEED_SALT);
    let mut objective = |x: &DVector<f64>| -> Result<f64, String> {
        let decoded = layout
            .decode(x.as_slice(), params)
            .map_err(|e| e.to_string())?;
        let Decoded::Pulse(pulse) = decoded else {
            return Err(HarnessError::LayoutMismatch {
                kind: layout.kind(),
            }
            .to_string());
        };
        let disturbed = pulse.with_noisy_coupling(rel_sigma, &mut noise_rng);
        evaluate_pulse(params, &disturbed)
            .map(|(lambda, _)| lambda)
            .map_err(|e| e.to_string())
    };
    let start = Instant::now();
    let run = run_bo(
        &mut OptimizationProblem {
            bounds: layout.bounds(),
            objective: &mut objective,
        },
        schedule,
        &BoConfig::default(),
        seed,
    )?;
    let wall = start.elapsed().as_secs_f64();
    let (_, noiseless) = decode_and_evaluate(layout, run.best_x.as_slice(), params)?;
    Ok(build_record(
        layout,
        params,
        schedule,
        seed,
        run,
        wall,
        Some(rel_sigma),
        Some(noiseless),
    ))
}

/// Scores one vector `n` times under fresh control noise, returning the
/// generalized squeezing of every disturbed realization.
pub fn reevaluate_noisy(
    layout: &VariableLayout,
    vector: &[f64],
    params: &SystemParams,
    rel_sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let Decoded::Pulse(pulse) = layout.decode(vector, params)? else {
        return Err(HarnessError::LayoutMismatch {
            kind: layout.kind(),
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SEED_SALT);
    (0..n)
        .map(|_| {
            let disturbed = pulse.with_noisy_coupling(rel_sigma, &mut rng);
            evaluate_pulse(params, &disturbed).map(|(_, s)| s)
        })
        .collect()
}

/// Runs `n_repeats` independently seeded optimizations (seeds
/// `base_seed..base_seed+n`) and summarizes the best-squeezing distribution
/// and the average best pulse.
///
/// Individual run failures are recorded as such and excluded from the
/// distribution; the call fails only if every repeat fails.
pub fn repeat_optimize(
    layout: &VariableLayout,
    params: &SystemParams,
    schedule: &PhaseSchedule,
    n_repeats: usize,
    base_seed: u64,
) -> Result<(RepeatSummary, Vec<RunRecord>), HarnessError> {
    assert!(n_repeats >= 1, "at least one repeat");
    let mut records = Vec::with_capacity(n_repeats);
    let mut first_error = None;
    for i in 0..n_repeats {
        match optimize_once(layout, params, schedule, base_seed + i as u64) {
            Ok(record) => records.push(record),
            Err(e) => first_error = first_error.or(Some(e)),
        }
    }
    if records.is_empty() {
        return Err(first_error.expect("n_repeats >= 1"));
    }
    let summary = summarize(layout, params, &records);
    Ok((summary, records))
}

/// Noisy-control counterpart of [`repeat_optimize`]: `n_repeats`
/// independently seeded [`noisy_optimize`] runs with the same seed
/// convention and summary.
pub fn repeat_noisy_optimize(
    layout: &VariableLayout,
    params: &SystemParams,
    schedule: &PhaseSchedule,
    rel_sigma: f64,
    n_repeats: usize,
    base_seed: u64,
) -> Result<(RepeatSummary, Vec<RunRecord>), HarnessError> {
    assert!(n_repeats >= 1, "at least one repeat");
    let mut records = Vec::with_capacity(n_repeats);
    let mut first_error = None;
    for i in 0..n_repeats {
        match noisy_optimize(layout, params, schedule, rel_sigma, base_seed + i as u64) {
            Ok(record) => records.push(record),
            Err(e) => first_error = first_error.or(Some(e)),
        }
    }
    if records.is_empty() {
        return Err(first_error.expect("n_repeats >= 1"));
    }
    let summary = summarize(layout, params, &records);
    Ok((summary, records))
}

/// Repeatedly optimizes at each heating rate Γ (holding γ and re-deriving
/// n_th = Γ/γ), reporting best and mean *signed* squeezing per point.
///
/// Initial occupancy follows the stability rule: n₀ = 100, raised to 10⁴
/// once Γ ≥ κ.
pub fn thermal_sweep(
    layout_kind: super::layout::LayoutKind,
    gamma_heat_list: &[f64],
    params: &SystemParams,
    schedule: &PhaseSchedule,
    n_repeats: usize,
    base_seed: u64,
) -> Result<Vec<SweepPoint>, HarnessError> {
    assert!(!gamma_heat_list.is_empty(), "at least one sweep point");
    let mut points = Vec::with_capacity(gamma_heat_list.len());
    for (i, &gamma_heat) in gamma_heat_list.iter().enumerate() {
        let n_th = gamma_heat / params.gamma;
        let n_0 = if gamma_heat >= params.kappa {
            HIGH_GAMMA_N0
        } else {
            SWEEP_COOLED_N0
        };
        let point_params = params.with_n_th(n_th).with_n_0(n_0);
        let point_layout = VariableLayout::new(layout_kind, &point_params);
        let seed = base_seed + (i as u64) * 1_000_003;
        let (_, records) =
            repeat_optimize(&point_layout, &point_params, schedule, n_repeats, seed)?;
        let per_run_db: Vec<f64> = records.iter().map(|r| r.best_s_signed).collect();
        let best_db = per_run_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean_db = per_run_db.iter().sum::<f64>() / per_run_db.len() as f64;
        points.push(SweepPoint {
            gamma_heat,
            n_th,
            n_0,
            best_db,
            mean_db,
            per_run_db,
        });
    }
    Ok(points)
}

/// Detection study and its exported angle landscapes.
#[derive(Debug, Clone)]
pub struct DetectionStudy {
    pub report: DetectionReport,
    /// Variance over (θ_c, θ_m) for the thermal initial state.
    pub landscape_thermal: DMatrix<f64>,
    /// Variance over (θ_c, θ_m) for the pre-cooled initial state.
    pub landscape_cooled: DMatrix<f64>,
}

/// Probes whether the detection-angle search finds the true λ_min on the
/// same pulse from a thermal start (n₀ = n_th) and a pre-cooled start.
pub fn detection_study(
    params: &SystemParams,
    pulse: &PulseConfig,
    cooled_n0: f64,
    search: &DetectionSearch,
    landscape_grid_n: usize,
) -> Result<DetectionStudy, HarnessError> {
    let survey = |n_0: f64| -> Result<(DetectionOutcome, DMatrix<f64>), HarnessError> {
        let p = params.with_n_0(n_0);
        let u = integrate_covariance(&p, pulse, &initial_covariance(&p))?;
        let v = u.bipartite();
        let lambda_min = min_eigenvalue(&v)?;
        let (angles, variance) = detect_min_variance(&v, search);
        let gap = variance - lambda_min;
        let outcome = DetectionOutcome {
            n_0,
            angles,
            variance,
            lambda_min,
            gap,
            trapped: gap > TRAPPED_REL_TOL * lambda_min.abs().max(1.0),
        };
        Ok((outcome, angle_landscape(&v, landscape_grid_n)))
    };
    let (thermal, landscape_thermal) = survey(params.n_th)?;
    let (cooled, landscape_cooled) = survey(cooled_n0)?;
    Ok(DetectionStudy {
        report: DetectionReport {
            schema_version: SCHEMA_VERSION.to_owned(),
            thermal,
            cooled,
        },
        landscape_thermal,
        landscape_cooled,
    })
}

/// Assembles the serializable record from a finished optimizer run.
#[allow(clippy::too_many_arguments)]
fn build_record(
    layout: &VariableLayout,
    params: &SystemParams,
    schedule: &PhaseSchedule,
    seed: u64,
    run: BoRun,
    wall_time_s: f64,
    noise_rel_sigma: Option<f64>,
    final_noiseless_s_gen: Option<f64>,
) -> RunRecord {
    let evaluations: Vec<EvaluationRecord> = run
        .evaluations
        .iter()
        .map(|e| EvaluationRecord {
            vector: e.x.as_slice().to_vec(),
            lambda_min: e.objective,
            s_gen: match &e.failure {
                None => generalized_squeezing(e.objective).ok(),
                Some(_) => None,
            },
            status: match &e.failure {
                None => EvalStatus::Ok,
                Some(message) => EvalStatus::Failed {
                    message: message.clone(),
                },
            },
        })
        .collect();
    let best_s_signed = signed_squeezing(run.best_y).unwrap_or(f64::NEG_INFINITY);
    RunRecord {
        schema_version: SCHEMA_VERSION.to_owned(),
        seed,
        layout: layout.clone(),
        schedule: *schedule,
        params: params.clone(),
        noise_rel_sigma,
        evaluations,
        incumbent_trace: run.incumbent_trace,
        best_vector: run.best_x.as_slice().to_vec(),
        best_lambda: run.best_y,
        best_s_gen: best_s_signed.max(0.0),
        best_s_signed,
        final_noiseless_s_gen,
        wall_time_s,
    }
}

/// Distribution summary over finished repeats.
fn summarize(
    layout: &VariableLayout,
    params: &SystemParams,
    records: &[RunRecord],
) -> RepeatSummary {
    let n = records.len();
    let best_s_gen: Vec<f64> = records.iter().map(|r| r.best_s_gen).collect();
    let min_db = best_s_gen.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_db = best_s_gen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_db = best_s_gen.iter().sum::<f64>() / n as f64;

    let dims = layout.dims();
    let mut mean_vector = vec![0.0; dims];
    for r in records {
        for (m, v) in mean_vector.iter_mut().zip(&r.best_vector) {
            *m += v / n as f64;
        }
    }
    // Five standard errors of the mean per component, the paper's plot-band
    // convention (zero-width for a single run).
    let mut vector_band = vec![0.0; dims];
    if n > 1 {
        for (j, band) in vector_band.iter_mut().enumerate() {
            let var = records
                .iter()
                .map(|r| (r.best_vector[j] - mean_vector[j]).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            *band = 5.0 * (var / n as f64).sqrt();
        }
    }

    let taus: Vec<f64> = records
        .iter()
        .filter_map(|r| match layout.decode(&r.best_vector, params) {
            Ok(Decoded::Pulse(pulse)) => Some(pulse.tau()),
            _ => None,
        })
        .collect();
    let (mean_tau, tau_band) = if taus.len() == n {
        let mean = taus.iter().sum::<f64>() / n as f64;
        let band = if n > 1 {
            let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            5.0 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        (Some(mean), Some(band))
    } else {
        (None, None)
    };

    let winner = records
        .iter()
        .max_by(|a, b| a.best_s_gen.total_cmp(&b.best_s_gen))
        .expect("at least one record");

    RepeatSummary {
        schema_version: SCHEMA_VERSION.to_owned(),
        n_repeats: n,
        seeds: records.iter().map(|r| r.seed).collect(),
        best_s_gen,
        min_db,
        mean_db,
        max_db,
        best_vector: winner.best_vector.clone(),
        best_seed: winner.seed,
        histogram: Histogram::of(
            &records
                .iter()
                .map(|r| r.best_s_gen)
                .collect::<Vec<f64>>(),
        ),
        mean_vector,
        vector_band,
        mean_tau,
        tau_band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::layout::LayoutKind;
    use approx::assert_relative_eq;

    /// Cheap parameters: modest occupancy keeps each integration fast while
    /// remaining a genuine optomechanical evaluation.
    fn fast_params() -> SystemParams {
        SystemParams::default().with_n_th(100.0).with_n_0(100.0)
    }

    #[test]
    fn weak_coupling_collects_no_squeezing() {
        let p = SystemParams::default();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let (lambda, s_gen) = decode_and_evaluate(&layout, &[0.01, 0.05], &p).unwrap();
        assert!(lambda > 0.9, "λ {lambda} should stay near vacuum");
        assert!(s_gen < 0.2, "S_gen {s_gen} dB should be negligible");
    }

    #[test]
    fn zero_coupling_scores_exactly_zero_squeezing() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::PwlCouplingFout, &p);
        let mut v = vec![0.0; 6];
        v.push(0.4);
        v.extend([0.3, 0.7, 1.0, 0.8, 0.4, 0.2]);
        let (lambda, s_gen) = decode_and_evaluate(&layout, &v, &p).unwrap();
        assert_relative_eq!(lambda, 1.0, max_relative = 1e-6);
        assert_eq!(s_gen, 0.0);
    }

    #[test]
    fn detection_vectors_do_not_evaluate_as_pulses() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::DetectionAngles, &p);
        assert!(matches!(
            decode_and_evaluate(&layout, &[0.3, 0.4], &p),
            Err(HarnessError::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn optimize_once_is_reproducible_and_in_bounds() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let schedule = PhaseSchedule::new(8, 8, 4);
        let a = optimize_once(&layout, &p, &schedule, 77).unwrap();
        let b = optimize_once(&layout, &p, &schedule, 77).unwrap();
        assert_eq!(a.best_vector, b.best_vector);
        assert_eq!(a.best_lambda, b.best_lambda);
        assert_eq!(a.evaluations.len(), schedule.total());
        let bounds = layout.bounds();
        for e in &a.evaluations {
            for (x, &(lo, hi)) in e.vector.iter().zip(&bounds) {
                assert!(*x >= lo && *x <= hi);
            }
        }
        for w in a.incumbent_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_repeat_summary_equals_the_run() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let schedule = PhaseSchedule::new(6, 6, 3);
        let (summary, records) = repeat_optimize(&layout, &p, &schedule, 1, 5).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(summary.min_db, records[0].best_s_gen);
        assert_eq!(summary.max_db, records[0].best_s_gen);
        assert_eq!(summary.mean_vector, records[0].best_vector);
        assert_eq!(summary.vector_band, vec![0.0, 0.0]);
    }

    #[test]
    fn noiseless_noisy_run_matches_plain_optimization() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let schedule = PhaseSchedule::new(6, 6, 3);
        let plain = optimize_once(&layout, &p, &schedule, 11).unwrap();
        let noisy = noisy_optimize(&layout, &p, &schedule, 0.0, 11).unwrap();
        assert_eq!(plain.best_vector, noisy.best_vector);
        assert_eq!(plain.best_lambda, noisy.best_lambda);
        let reeval = noisy.final_noiseless_s_gen.unwrap();
        assert_relative_eq!(reeval, noisy.best_s_gen, epsilon = 1e-12);
    }

    #[test]
    fn noise_stream_is_deterministic_per_seed() {
        let p = fast_params();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let a = reevaluate_noisy(&layout, &[0.5, 0.8], &p, 0.1, 5, 3).unwrap();
        let b = reevaluate_noisy(&layout, &[0.5, 0.8], &p, 0.1, 5, 3).unwrap();
        let c = reevaluate_noisy(&layout, &[0.5, 0.8], &p, 0.1, 5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn cooled_detection_finds_the_true_optimum() {
        let p = SystemParams::default();
        let layout = VariableLayout::new(LayoutKind::ConstCoupling, &p);
        let Decoded::Pulse(pulse) = layout.decode(&[0.4, 0.9], &p).unwrap() else {
            panic!("expected a pulse");
        };
        let study =
            detection_study(&p, &pulse, 100.0, &DetectionSearch::default(), 16).unwrap();
        assert!(!study.report.cooled.trapped, "cooled search should succeed");
        assert!(study.report.cooled.gap.abs() < 1e-6);
        assert_eq!(study.landscape_cooled.nrows(), 16);
        // The thermal landscape sits far above its cooled counterpart.
        assert!(study.report.thermal.variance > study.report.cooled.variance);
    }
}
