//! The three-phase Bayesian-optimization loop: seeded initial design,
//! expected-improvement exploration, and confidence-bound exploitation in a
//! trust region around the incumbent.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::acquisition::{acquisition_ei, acquisition_lcb};
use super::gp::{GpConfig, GpSurrogate};
use super::lhs::initial_design;
use super::BayesOptError;

/// Evaluation counts of the three optimization phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    /// Latin-hypercube evaluations before the surrogate exists.
    pub n_initial: usize,
    /// Expected-improvement steps over the full box.
    pub n_explore: usize,
    /// Confidence-bound steps confined near the incumbent.
    pub n_exploit: usize,
}

impl PhaseSchedule {
    pub fn new(n_initial: usize, n_explore: usize, n_exploit: usize) -> Self {
        let schedule = Self {
            n_initial,
            n_explore,
            n_exploit,
        };
        assert!(schedule.is_valid(), "every phase needs at least one step");
        schedule
    }

    /// All phases populated?
    pub fn is_valid(&self) -> bool {
        self.n_initial >= 1 && self.n_explore >= 1 && self.n_exploit >= 1
    }

    /// Total number of objective evaluations the schedule spends.
    pub fn total(&self) -> usize {
        self.n_initial + self.n_explore + self.n_exploit
    }
}

/// A bounded minimization problem over ℝ^d.
pub struct OptimizationProblem<'a> {
    /// Per-dimension (lower, upper) bounds, all finite with lower < upper.
    pub bounds: Vec<(f64, f64)>,
    /// The black-box objective; an Err marks the point infeasible and is
    /// recorded (and penalized), not propagated.
    pub objective: &'a mut dyn FnMut(&DVector<f64>) -> Result<f64, String>,
}

/// Loop-level tuning knobs (the schedule is passed separately).
#[derive(Debug, Clone)]
pub struct BoConfig {
    /// Latin-hypercube candidate-pool size per proposal.
    pub pool_size: usize,
    /// Additional candidates sampled around the incumbent per proposal.
    pub n_perturbations: usize,
    /// Perturbation spread as a fraction of the active search-box range.
    pub perturb_sigma: f64,
    /// Confidence-bound weight for the exploitation phase.
    pub lcb_beta: f64,
    /// Exploitation trust-region half-width as a fraction of each bound
    /// range.
    pub trust_fraction: f64,
    /// Full hyperparameter refits happen every this many new observations.
    pub refit_interval: usize,
    /// Beyond this history length, refits condition on a subset
    /// (best + most recent) to bound the cubic factorization cost.
    pub max_conditioning: usize,
    /// Subset composition: this many best points…
    pub subset_best: usize,
    /// …plus this many most recent points.
    pub subset_recent: usize,
    /// Surrogate fitting configuration.
    pub gp: GpConfig,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            pool_size: 2000,
            n_perturbations: 256,
            perturb_sigma: 0.05,
            lcb_beta: 0.5,
            trust_fraction: 0.1,
            refit_interval: 20,
            max_conditioning: 350,
            subset_best: 150,
            subset_recent: 200,
            gp: GpConfig::default(),
        }
    }
}

/// One recorded objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// The point, in original (unnormalized) units.
    pub x: DVector<f64>,
    /// The value recorded for the surrogate: the objective, or the failure
    /// penalty.
    pub objective: f64,
    /// The failure message when the evaluator rejected the point.
    pub failure: Option<String>,
}

/// Full history of one optimization run.
#[derive(Debug, Clone)]
pub struct BoRun {
    pub evaluations: Vec<Evaluation>,
    /// Best recorded objective after each evaluation (monotone
    /// non-increasing).
    pub incumbent_trace: Vec<f64>,
    /// Location of the best recorded objective.
    pub best_x: DVector<f64>,
    pub best_y: f64,
}

/// The acquisition driving one proposal.
#[derive(Debug, Clone, Copy)]
pub enum AcquisitionKind {
    /// Expected improvement below the given incumbent value.
    ExpectedImprovement { y_best: f64 },
    /// Lower confidence bound with the given exploration weight.
    LowerConfidenceBound { beta: f64 },
}

/// Scores a candidate pool plus incumbent perturbations under the
/// acquisition, then refines the best candidate by bounded coordinate
/// descent on the acquisition surface.
///
/// `bounds` is the normalization frame the surrogate was trained in;
/// `search` (when given) restricts proposals to a sub-box of it.  Returns a
/// point in original units, always inside the search box.  Deterministic
/// under the RNG state.
pub fn propose_next(
    model: &GpSurrogate,
    acquisition: &AcquisitionKind,
    bounds: &[(f64, f64)],
    search: Option<&[(f64, f64)]>,
    incumbent: Option<&DVector<f64>>,
    config: &BoConfig,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let active: Vec<(f64, f64)> = search.unwrap_or(bounds).to_vec();
    let d = active.len();

    let score = |x: &DVector<f64>| -> f64 {
        let (mean, std) = model.posterior(&normalize(x, bounds));
        match *acquisition {
            AcquisitionKind::ExpectedImprovement { y_best } => acquisition_ei(mean, std, y_best),
            AcquisitionKind::LowerConfidenceBound { beta } => acquisition_lcb(mean, std, beta),
        }
    };

    let mut candidates = initial_design(&active, config.pool_size, rng);
    if let Some(center) = incumbent {
        for _ in 0..config.n_perturbations {
            let mut x = center.clone();
            for j in 0..d {
                let (lo, hi) = active[j];
                let n: f64 = StandardNormal.sample(rng);
                x[j] = (x[j] + config.perturb_sigma * (hi - lo) * n).clamp(lo, hi);
            }
            candidates.push(x);
        }
    }

    let mut best = candidates[0].clone();
    let mut best_score = score(&best);
    for c in &candidates[1..] {
        let s = score(c);
        if s > best_score {
            best_score = s;
            best = c.clone();
        }
    }

    // Coordinate-wise pattern search sharpens the pool winner; the
    // acquisition is cheap relative to the objective, so a few hundred extra
    // posterior queries are well spent.
    let mut steps: Vec<f64> = active.iter().map(|(lo, hi)| 0.05 * (hi - lo)).collect();
    let min_step: Vec<f64> = active.iter().map(|(lo, hi)| 1e-4 * (hi - lo)).collect();
    loop {
        let mut improved = false;
        for j in 0..d {
            for dir in [1.0, -1.0] {
                let (lo, hi) = active[j];
                let mut trial = best.clone();
                trial[j] = (trial[j] + dir * steps[j]).clamp(lo, hi);
                if trial[j] == best[j] {
                    continue;
                }
                let s = score(&trial);
                if s > best_score {
                    best_score = s;
                    best = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            let mut all_done = true;
            for j in 0..d {
                steps[j] *= 0.5;
                if steps[j] >= min_step[j] {
                    all_done = false;
                }
            }
            if all_done {
                break;
            }
        }
    }
    best
}

/// Runs the full three-phase loop: `n_initial` Latin-hypercube evaluations,
/// `n_explore` expected-improvement proposals over the whole box, and
/// `n_exploit` confidence-bound proposals inside a trust region around the
/// incumbent.
///
/// Evaluator failures are recorded and penalized (worst observed value plus
/// three standard deviations of the observed spread) so the surrogate learns
/// to avoid the infeasible region; they are never propagated.  The run is
/// deterministic under (problem, schedule, seed) for a deterministic
/// objective.
pub fn run_bo(
    problem: &mut OptimizationProblem,
    schedule: &PhaseSchedule,
    config: &BoConfig,
    seed: u64,
) -> Result<BoRun, BayesOptError> {
    assert!(schedule.is_valid(), "every phase needs at least one step");
    let bounds = problem.bounds.clone();
    assert!(!bounds.is_empty(), "at least one optimization variable");
    for &(lo, hi) in &bounds {
        assert!(
            lo.is_finite() && hi.is_finite() && lo < hi,
            "bounds must be finite with lo < hi"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations: Vec<Evaluation> = Vec::with_capacity(schedule.total());
    let mut incumbent_trace: Vec<f64> = Vec::with_capacity(schedule.total());
    let mut best: Option<(DVector<f64>, f64)> = None;

    let evaluate =
        |x: DVector<f64>,
         evaluations: &mut Vec<Evaluation>,
         incumbent_trace: &mut Vec<f64>,
         best: &mut Option<(DVector<f64>, f64)>,
         objective: &mut dyn FnMut(&DVector<f64>) -> Result<f64, String>| {
            let outcome = objective(&x);
            let (value, failure) = match outcome {
                Ok(y) if y.is_finite() => (y, None),
                Ok(y) => (f64::NAN, Some(format!("non-finite objective {y}"))),
                Err(message) => (f64::NAN, Some(message)),
            };
            let recorded = if failure.is_none() {
                value
            } else {
                failure_penalty(evaluations)
            };
            if failure.is_none() && best.as_ref().is_none_or(|(_, b)| recorded < *b) {
                *best = Some((x.clone(), recorded));
            }
            evaluations.push(Evaluation {
                x,
                objective: recorded,
                failure,
            });
            let current_best = best
                .as_ref()
                .map(|(_, b)| *b)
                .unwrap_or_else(|| evaluations.last().unwrap().objective)
                .min(incumbent_trace.last().copied().unwrap_or(f64::INFINITY));
            incumbent_trace.push(current_best);
            recorded
        };

    // Phase 1: space-filling design.
    for x in initial_design(&bounds, schedule.n_initial, &mut rng) {
        evaluate(
            x,
            &mut evaluations,
            &mut incumbent_trace,
            &mut best,
            problem.objective,
        );
    }

    let mut surrogate = fit_on_history(&evaluations, &bounds, config, &mut rng)?;
    let mut since_refit = 0usize;

    // Phases 2 and 3 share the propose/evaluate/absorb cycle and differ in
    // acquisition and search box.
    for step in 0..(schedule.n_explore + schedule.n_exploit) {
        let exploit = step >= schedule.n_explore;
        if since_refit >= config.refit_interval {
            surrogate = fit_on_history(&evaluations, &bounds, config, &mut rng)?;
            since_refit = 0;
        }

        let incumbent = best.as_ref().map(|(x, _)| x.clone());
        let y_best = best
            .as_ref()
            .map(|(_, y)| *y)
            .unwrap_or_else(|| failure_penalty(&evaluations));
        let trust_box: Option<Vec<(f64, f64)>> = if exploit {
            let center = incumbent
                .clone()
                .unwrap_or_else(|| DVector::from_fn(bounds.len(), |j, _| {
                    0.5 * (bounds[j].0 + bounds[j].1)
                }));
            Some(
                bounds
                    .iter()
                    .enumerate()
                    .map(|(j, &(lo, hi))| {
                        let half = config.trust_fraction * (hi - lo);
                        ((center[j] - half).max(lo), (center[j] + half).min(hi))
                    })
                    .collect(),
            )
        } else {
            None
        };
        let acquisition = if exploit {
            AcquisitionKind::LowerConfidenceBound {
                beta: config.lcb_beta,
            }
        } else {
            AcquisitionKind::ExpectedImprovement { y_best }
        };

        let x = propose_next(
            &surrogate,
            &acquisition,
            &bounds,
            trust_box.as_deref(),
            incumbent.as_ref(),
            config,
            &mut rng,
        );
        let y = evaluate(
            x.clone(),
            &mut evaluations,
            &mut incumbent_trace,
            &mut best,
            problem.objective,
        );
        surrogate.append(normalize(&x, &bounds), y)?;
        since_refit += 1;
    }

    let (best_x, best_y) = best.unwrap_or_else(|| {
        // Every evaluation failed: report the last penalized point.
        let last = evaluations.last().unwrap();
        (last.x.clone(), last.objective)
    });
    Ok(BoRun {
        evaluations,
        incumbent_trace,
        best_x,
        best_y,
    })
}

/// Penalty assigned to a failed evaluation: the worst successful value plus
/// three standard deviations of the successful spread, or a large constant
/// before any success exists.
fn failure_penalty(evaluations: &[Evaluation]) -> f64 {
    let successes: Vec<f64> = evaluations
        .iter()
        .filter(|e| e.failure.is_none())
        .map(|e| e.objective)
        .collect();
    if successes.is_empty() {
        return 1e9;
    }
    let worst = successes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = successes.iter().sum::<f64>() / successes.len() as f64;
    let var =
        successes.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / successes.len() as f64;
    worst + 3.0 * var.sqrt()
}

/// Fits a fresh surrogate on the (possibly subset) history.
fn fit_on_history(
    evaluations: &[Evaluation],
    bounds: &[(f64, f64)],
    config: &BoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GpSurrogate, BayesOptError> {
    let m = evaluations.len();
    let indices: Vec<usize> = if m <= config.max_conditioning {
        (0..m).collect()
    } else {
        // The best points keep the promising basins in view; the most recent
        // keep the local structure current.  Order-preserving dedup.
        let mut ranked: Vec<usize> = (0..m).collect();
        ranked.sort_by(|&a, &b| {
            evaluations[a]
                .objective
                .partial_cmp(&evaluations[b].objective)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut keep = vec![false; m];
        for &i in ranked.iter().take(config.subset_best) {
            keep[i] = true;
        }
        for i in m.saturating_sub(config.subset_recent)..m {
            keep[i] = true;
        }
        (0..m).filter(|&i| keep[i]).collect()
    };
    let inputs: Vec<DVector<f64>> = indices
        .iter()
        .map(|&i| normalize(&evaluations[i].x, bounds))
        .collect();
    let outputs: Vec<f64> = indices.iter().map(|&i| evaluations[i].objective).collect();
    GpSurrogate::fit(inputs, outputs, &config.gp, rng)
}

/// Maps original units into the unit box the surrogate is trained on.
fn normalize(x: &DVector<f64>, bounds: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let (lo, hi) = bounds[j];
        (x[j] - lo) / (hi - lo)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::gp::NoiseMode;

    fn sphere_problem(bounds: Vec<(f64, f64)>) -> (Vec<(f64, f64)>, impl FnMut(&DVector<f64>) -> Result<f64, String>) {
        (bounds, |x: &DVector<f64>| Ok(x.norm_squared()))
    }

    #[test]
    fn sphere_is_minimized_to_the_contract_accuracy() {
        let (bounds, mut objective) = sphere_problem(vec![(-1.0, 1.0), (-1.0, 1.0)]);
        let mut problem = OptimizationProblem {
            bounds,
            objective: &mut objective,
        };
        let run = run_bo(
            &mut problem,
            &PhaseSchedule::new(40, 40, 20),
            &BoConfig::default(),
            7,
        )
        .unwrap();
        assert!(run.best_y < 1e-2, "sphere best {}", run.best_y);
        assert_eq!(run.evaluations.len(), 100);
    }

    #[test]
    fn incumbent_trace_is_monotone_and_budget_exact() {
        let mut objective =
            |x: &DVector<f64>| Ok((x[0] - 0.2).powi(2) + (x[0] * 5.0).sin() * 0.1);
        let mut problem = OptimizationProblem {
            bounds: vec![(-2.0, 2.0)],
            objective: &mut objective,
        };
        let schedule = PhaseSchedule::new(10, 15, 5);
        let run = run_bo(&mut problem, &schedule, &BoConfig::default(), 3).unwrap();
        assert_eq!(run.evaluations.len(), schedule.total());
        assert_eq!(run.incumbent_trace.len(), schedule.total());
        for w in run.incumbent_trace.windows(2) {
            assert!(w[1] <= w[0], "incumbent worsened: {} -> {}", w[0], w[1]);
        }
        let recomputed = run
            .evaluations
            .iter()
            .map(|e| e.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(recomputed, *run.incumbent_trace.last().unwrap());
    }

    #[test]
    fn identical_seeds_replay_identical_evaluation_sequences() {
        let run = |seed: u64| {
            let mut objective = |x: &DVector<f64>| Ok((x[0] + 0.3).powi(2) * (x[1] - 0.1).cos());
            let mut problem = OptimizationProblem {
                bounds: vec![(-1.0, 1.0), (0.0, 2.0)],
                objective: &mut objective,
            };
            run_bo(&mut problem, &PhaseSchedule::new(8, 8, 4), &BoConfig::default(), seed)
                .unwrap()
        };
        let a = run(11);
        let b = run(11);
        let c = run(12);
        for (ea, eb) in a.evaluations.iter().zip(&b.evaluations) {
            assert_eq!(ea.x, eb.x);
            assert_eq!(ea.objective, eb.objective);
        }
        assert!(
            a.evaluations.iter().zip(&c.evaluations).any(|(x, y)| x.x != y.x),
            "different seeds should explore differently"
        );
    }

    #[test]
    fn every_proposal_stays_inside_the_bounds() {
        let bounds = vec![(0.5, 1.5), (-3.0, -1.0), (10.0, 11.0)];
        let mut objective = |x: &DVector<f64>| Ok(x[0] + x[1] + x[2]);
        let mut problem = OptimizationProblem {
            bounds: bounds.clone(),
            objective: &mut objective,
        };
        let run = run_bo(&mut problem, &PhaseSchedule::new(6, 10, 6), &BoConfig::default(), 5)
            .unwrap();
        for e in &run.evaluations {
            for (j, &(lo, hi)) in bounds.iter().enumerate() {
                assert!(e.x[j] >= lo && e.x[j] <= hi, "coordinate {j} escaped");
            }
        }
    }

    #[test]
    fn failures_are_penalized_and_recorded_rather_than_fatal() {
        // Half the box is infeasible; the optimizer must keep going and
        // land in the feasible half.
        let mut objective = |x: &DVector<f64>| {
            if x[0] < 0.0 {
                Err("infeasible half".to_owned())
            } else {
                Ok((x[0] - 0.4).powi(2))
            }
        };
        let mut problem = OptimizationProblem {
            bounds: vec![(-1.0, 1.0)],
            objective: &mut objective,
        };
        let run = run_bo(&mut problem, &PhaseSchedule::new(12, 12, 6), &BoConfig::default(), 9)
            .unwrap();
        let n_failed = run.evaluations.iter().filter(|e| e.failure.is_some()).count();
        assert!(n_failed >= 1, "the design should have probed the infeasible half");
        for e in run.evaluations.iter().filter(|e| e.failure.is_some()) {
            let worst_ok = run
                .evaluations
                .iter()
                .filter(|e| e.failure.is_none())
                .map(|e| e.objective)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(e.objective >= worst_ok.min(1e9));
        }
        assert!(run.best_y < 0.05, "feasible optimum missed: {}", run.best_y);
        assert!(run.best_x[0] >= 0.0);
    }

    #[test]
    fn quadratic_proposal_lands_near_the_minimizer_under_ei() {
        // Spec-style toy check: ten observations of a parabola, one EI
        // proposal must fall within 0.05 of the true minimizer.
        let bounds = vec![(0.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs = initial_design(&bounds, 10, &mut rng);
        let inputs: Vec<DVector<f64>> = xs.clone();
        let outputs: Vec<f64> = xs.iter().map(|x| (x[0] - 0.3).powi(2)).collect();
        let y_best = outputs.iter().cloned().fold(f64::INFINITY, f64::min);
        let gp = GpSurrogate::fit(
            inputs,
            outputs,
            &GpConfig {
                noise: NoiseMode::Fixed(0.0),
                ..GpConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let x = propose_next(
            &gp,
            &AcquisitionKind::ExpectedImprovement { y_best },
            &bounds,
            None,
            None,
            &BoConfig::default(),
            &mut rng,
        );
        assert!((x[0] - 0.3).abs() < 0.05, "proposed {}", x[0]);
    }
}
