//! The seven subcommands: thin, persistence-focused wrappers around the
//! library's simulator and optimization harness.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use sqzopt_core::dynamics::{initial_covariance, integrate_covariance, optimal_fout_constant};
use sqzopt_core::harness::{
    check_schema, detection_study, repeat_noisy_optimize, repeat_optimize, reevaluate_noisy,
    thermal_sweep, EvaluationRecord, HarnessError, Histogram, LayoutKind, RepeatSummary,
    RunRecord, VariableLayout,
};
use sqzopt_core::bayesopt::PhaseSchedule;
use sqzopt_core::params::SystemParams;
use sqzopt_core::pulses::{Profile, PulseConfig, DEFAULT_GAIN_LIMIT};
use sqzopt_core::squeezing::{
    angle_landscape, generalized_squeezing, min_eigenvalue, signed_squeezing, DetectionSearch,
};

use crate::config::ExperimentConfig;
use crate::output::{
    ensure_dir, write_csv_with_sidecar, write_json, write_jsonl, ArtifactHeader,
};
use crate::CliError;

fn compute_err(e: HarnessError) -> CliError {
    CliError::Compute(e.to_string())
}

/// Builds the explicit pulse described by the `[pulse]` section.
fn build_pulse(cfg: &ExperimentConfig, params: &SystemParams) -> Result<PulseConfig, CliError> {
    let ps = cfg.pulse_required()?;
    let fout = match &ps.fout {
        Some(knots) => Profile::pwl(knots.clone(), ps.tau)
            .map_err(|e| CliError::Config(format!("invalid pulse.fout: {e}")))?,
        None => optimal_fout_constant(params, ps.g, ps.tau),
    };
    PulseConfig::new(
        Profile::Constant(ps.g),
        Profile::Constant(ps.detuning_offset),
        fout,
        ps.tau,
        DEFAULT_GAIN_LIMIT,
        ps.gain_proportion,
        params.kappa,
    )
    .map_err(|e| CliError::Config(format!("invalid pulse: {e}")))
}

/// Builds the configured variable layout (bounds override applied).
fn build_layout(
    cfg: &ExperimentConfig,
    params: &SystemParams,
) -> Result<VariableLayout, CliError> {
    let layout = match cfg.run.layout {
        LayoutKind::DetectionAngles => {
            return Err(CliError::Config(
                "layout detection_angles has no dynamics objective; use the detect command".into(),
            ))
        }
        LayoutKind::FoutOnly => {
            let base_vector: [f64; 2] = if let Some(base) = cfg.run.fout_base {
                base
            } else if let Some(path) = &cfg.run.fout_base_from {
                read_const_best_vector(path)?
            } else {
                return Err(CliError::Config(
                    "layout fout_only needs run.fout_base = [g, gain_proportion] or \
                     run.fout_base_from = \"<const_coupling summary.json>\""
                        .into(),
                ));
            };
            VariableLayout::fout_only_from_best(params, &base_vector)
                .map_err(|e| CliError::Config(format!("invalid fout_only base: {e}")))?
        }
        kind => VariableLayout::new(kind, params),
    };
    match &cfg.run.bounds {
        Some(bounds) => {
            let pairs: Vec<(f64, f64)> = bounds.iter().map(|b| (b[0], b[1])).collect();
            layout
                .with_bounds(pairs)
                .map_err(|e| CliError::Config(format!("invalid run.bounds: {e}")))
        }
        None => Ok(layout),
    }
}

/// Extracts the best constant-coupling vector from a previously written
/// optimize summary, rejecting wrong layouts and unknown schema majors.
fn read_const_best_vector(path: &Path) -> Result<[f64; 2], CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not JSON: {e}", path.display())))?;
    let version = value["schema_version"].as_str().unwrap_or_default();
    check_schema(version).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if value["config"]["run"]["layout"].as_str() != Some("const_coupling") {
        return Err(CliError::Config(format!(
            "{} is not a const_coupling summary",
            path.display()
        )));
    }
    let best: Vec<f64> = value["summary"]["best_vector"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
        .unwrap_or_default();
    if best.len() != 2 {
        return Err(CliError::Config(format!(
            "{} has no 2-component best_vector",
            path.display()
        )));
    }
    Ok([best[0], best[1]])
}

fn resolve_schedule(cfg: &ExperimentConfig, layout: &VariableLayout) -> PhaseSchedule {
    match cfg.run.schedule {
        Some(s) => PhaseSchedule::new(s.n_initial, s.n_explore, s.n_exploit),
        None => layout.default_schedule(),
    }
}

#[derive(Serialize)]
struct EvalLine<'a> {
    run_index: usize,
    eval_index: usize,
    #[serde(flatten)]
    eval: &'a EvaluationRecord,
}

fn eval_lines(records: &[RunRecord]) -> impl Iterator<Item = EvalLine<'_>> {
    records.iter().enumerate().flat_map(|(run_index, r)| {
        r.evaluations
            .iter()
            .enumerate()
            .map(move |(eval_index, eval)| EvalLine {
                run_index,
                eval_index,
                eval,
            })
    })
}

/// Per-run digest for `run_meta.json` (the only artifact allowed to carry
/// wall-clock time, which is what keeps the others byte-reproducible).
#[derive(Serialize)]
struct RunMeta<'a> {
    seed: u64,
    wall_time_s: f64,
    best_s_gen: f64,
    best_s_signed: f64,
    best_vector: &'a [f64],
    incumbent_trace: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    final_noiseless_s_gen: Option<f64>,
}

fn write_run_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    layout: &VariableLayout,
    schedule: &PhaseSchedule,
    summary_name: &str,
    summary: &RepeatSummary,
    records: &[RunRecord],
    extra: Option<NoisyExtras>,
) -> Result<(), CliError> {
    let header = ArtifactHeader::new(cfg);

    #[derive(Serialize)]
    struct SummaryArtifact<'a> {
        #[serde(flatten)]
        header: &'a ArtifactHeader<'a>,
        layout: &'a VariableLayout,
        schedule: &'a PhaseSchedule,
        #[serde(flatten)]
        noisy: Option<&'a NoisyExtras>,
        summary: &'a RepeatSummary,
    }
    write_json(
        dir,
        summary_name,
        &SummaryArtifact {
            header: &header,
            layout,
            schedule,
            noisy: extra.as_ref(),
            summary,
        },
    )?;

    write_jsonl(dir, "evaluations.jsonl", &header, eval_lines(records))?;

    #[derive(Serialize)]
    struct RunMetaArtifact<'a> {
        #[serde(flatten)]
        header: &'a ArtifactHeader<'a>,
        runs: Vec<RunMeta<'a>>,
    }
    write_json(
        dir,
        "run_meta.json",
        &RunMetaArtifact {
            header: &header,
            runs: records
                .iter()
                .map(|r| RunMeta {
                    seed: r.seed,
                    wall_time_s: r.wall_time_s,
                    best_s_gen: r.best_s_gen,
                    best_s_signed: r.best_s_signed,
                    best_vector: &r.best_vector,
                    incumbent_trace: &r.incumbent_trace,
                    final_noiseless_s_gen: r.final_noiseless_s_gen,
                })
                .collect(),
        },
    )?;
    Ok(())
}

/// One simulated pulse: covariance, λ_min, squeezing.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.system.to_params();
    let pulse = build_pulse(cfg, &params)?;
    let u = integrate_covariance(&params, &pulse, &initial_covariance(&params))
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let v = u.bipartite();
    let lambda_min = min_eigenvalue(&v).map_err(|e| CliError::Compute(e.to_string()))?;
    let s_gen =
        generalized_squeezing(lambda_min).map_err(|e| CliError::Compute(e.to_string()))?;

    ensure_dir(out)?;
    #[derive(Serialize)]
    struct SimulateArtifact<'a> {
        #[serde(flatten)]
        header: ArtifactHeader<'a>,
        /// Bipartite covariance (X_m, Y_m, 𝒳_out, 𝒴_out), row-major.
        v: Vec<Vec<f64>>,
        lambda_min: f64,
        s_gen: f64,
        s_signed: Option<f64>,
    }
    let path = write_json(
        out,
        "simulate.json",
        &SimulateArtifact {
            header: ArtifactHeader::new(cfg),
            v: (0..4)
                .map(|i| (0..4).map(|j| v.v[(i, j)]).collect())
                .collect(),
            lambda_min,
            s_gen,
            s_signed: signed_squeezing(lambda_min).ok(),
        },
    )?;
    println!(
        "simulate: lambda_min = {lambda_min:.6e}, S_gen = {s_gen:.4} dB -> {}",
        path.display()
    );
    Ok(())
}

/// Seeded repeat optimization of the configured layout.
pub fn cmd_optimize(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.system.to_params();
    let layout = build_layout(cfg, &params)?;
    let schedule = resolve_schedule(cfg, &layout);
    let (summary, records) = repeat_optimize(
        &layout,
        &params,
        &schedule,
        cfg.run.repeats,
        cfg.run.seed,
    )
    .map_err(compute_err)?;

    ensure_dir(out)?;
    write_run_artifacts(
        out,
        cfg,
        &layout,
        &schedule,
        "summary.json",
        &summary,
        &records,
        None,
    )?;
    println!(
        "optimize: {} repeats, best S_gen min/mean/max = {:.3}/{:.3}/{:.3} dB -> {}",
        summary.n_repeats,
        summary.min_db,
        summary.mean_db,
        summary.max_db,
        out.join("summary.json").display()
    );
    Ok(())
}

/// Extra fields a noisy-control run adds to its summary artifact.
#[derive(Serialize)]
struct NoisyExtras {
    rel_sigma: f64,
    /// Noiseless re-evaluation of each run's incumbent, seed order.
    noiseless_s_gen: Vec<Option<f64>>,
    noiseless_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reevaluation: Option<Reevaluation>,
}

#[derive(Serialize)]
struct Reevaluation {
    /// The incumbent re-scored under fresh noise draws.
    vector: Vec<f64>,
    seed: u64,
    n: usize,
    mean: f64,
    std: f64,
    histogram: Histogram,
    /// The same incumbent's noiseless value.
    noiseless: f64,
}

/// Control-noise robustness study: optimize under noisy evaluations, then
/// re-score incumbents without noise (and optionally under many fresh
/// draws).
pub fn cmd_noisy(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.system.to_params();
    let layout = build_layout(cfg, &params)?;
    let schedule = resolve_schedule(cfg, &layout);
    let rel_sigma = cfg.noise.rel_sigma;
    let (summary, records) = repeat_noisy_optimize(
        &layout,
        &params,
        &schedule,
        rel_sigma,
        cfg.run.repeats,
        cfg.run.seed,
    )
    .map_err(compute_err)?;

    let noiseless: Vec<Option<f64>> = records.iter().map(|r| r.final_noiseless_s_gen).collect();
    let clean: Vec<f64> = noiseless.iter().flatten().copied().collect();
    let noiseless_mean = if clean.is_empty() {
        f64::NAN
    } else {
        clean.iter().sum::<f64>() / clean.len() as f64
    };

    // Re-evaluate the noiselessly-best incumbent under fresh noise.
    let reevaluation = if cfg.noise.n_reevaluate > 0 {
        let winner = records
            .iter()
            .max_by(|a, b| {
                let (a, b) = (
                    a.final_noiseless_s_gen.unwrap_or(f64::NEG_INFINITY),
                    b.final_noiseless_s_gen.unwrap_or(f64::NEG_INFINITY),
                );
                a.total_cmp(&b)
            })
            .expect("at least one record");
        let reeval_seed = cfg.run.seed.wrapping_add(0x5eed);
        let values = reevaluate_noisy(
            &layout,
            &winner.best_vector,
            &params,
            rel_sigma,
            cfg.noise.n_reevaluate,
            reeval_seed,
        )
        .map_err(compute_err)?;
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        Some(Reevaluation {
            vector: winner.best_vector.clone(),
            seed: reeval_seed,
            n,
            mean,
            std: var.sqrt(),
            histogram: Histogram::of(&values),
            noiseless: winner.final_noiseless_s_gen.unwrap_or(f64::NAN),
        })
    } else {
        None
    };

    ensure_dir(out)?;
    write_run_artifacts(
        out,
        cfg,
        &layout,
        &schedule,
        "noisy_summary.json",
        &summary,
        &records,
        Some(NoisyExtras {
            rel_sigma,
            noiseless_s_gen: noiseless,
            noiseless_mean,
            reevaluation,
        }),
    )?;
    println!(
        "noisy: {} repeats at sigma = {rel_sigma}, noiseless mean = {noiseless_mean:.3} dB -> {}",
        summary.n_repeats,
        out.join("noisy_summary.json").display()
    );
    Ok(())
}

/// Reheating-rate sweep; CSV columns: gamma_heat, best_dB, mean_dB.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.sweep.gamma_heat.is_empty() {
        return Err(CliError::Config(
            "sweep needs sweep.gamma_heat = [..] (reheating rates in kappa units)".into(),
        ));
    }
    let kind = cfg.run.layout;
    if matches!(kind, LayoutKind::FoutOnly | LayoutKind::DetectionAngles) {
        return Err(CliError::Config(
            "sweep supports const_coupling, pwl_coupling_fout, or pwl_all layouts".into(),
        ));
    }
    let params = cfg.system.to_params();
    let schedule = match cfg.run.schedule {
        Some(s) => PhaseSchedule::new(s.n_initial, s.n_explore, s.n_exploit),
        None => VariableLayout::new(kind, &params).default_schedule(),
    };
    let points = thermal_sweep(
        kind,
        &cfg.sweep.gamma_heat,
        &params,
        &schedule,
        cfg.run.repeats,
        cfg.run.seed,
    )
    .map_err(compute_err)?;

    ensure_dir(out)?;
    let header = ArtifactHeader::new(cfg);
    write_csv_with_sidecar(
        out,
        "sweep.csv",
        &header,
        "gamma_heat (kappa units), best_dB (signed), mean_dB (signed)",
        |w| {
            w.write_record(["gamma_heat", "best_dB", "mean_dB"])?;
            for p in &points {
                w.write_record([
                    p.gamma_heat.to_string(),
                    p.best_db.to_string(),
                    p.mean_db.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;

    #[derive(Serialize)]
    struct SweepArtifact<'a> {
        #[serde(flatten)]
        header: &'a ArtifactHeader<'a>,
        schedule: &'a PhaseSchedule,
        points: &'a [sqzopt_core::harness::SweepPoint],
    }
    write_json(
        out,
        "sweep.json",
        &SweepArtifact {
            header: &header,
            schedule: &schedule,
            points: &points,
        },
    )?;
    for p in &points {
        println!(
            "sweep: gamma_heat = {:.3e} -> best {:+.3} dB, mean {:+.3} dB",
            p.gamma_heat, p.best_db, p.mean_db
        );
    }
    println!("sweep: wrote {}", out.join("sweep.csv").display());
    Ok(())
}

/// Writes one angle landscape as CSV: first row holds θ_m grid values,
/// first column holds θ_c grid values (row-major grid of variances).
fn write_landscape_csv(
    dir: &Path,
    name: &str,
    header: &ArtifactHeader,
    grid: &DMatrix<f64>,
) -> Result<(), CliError> {
    let n = grid.nrows();
    let step = std::f64::consts::PI / n as f64;
    write_csv_with_sidecar(
        dir,
        name,
        header,
        "corner cell labels the axes; first row theta_m values, first column theta_c \
         values, body cells min-over-phi Var X_gen",
        |w| {
            let mut row: Vec<String> = Vec::with_capacity(n + 1);
            row.push("theta_c/theta_m".into());
            row.extend((0..n).map(|j| (j as f64 * step).to_string()));
            w.write_record(&row)?;
            for i in 0..n {
                row.clear();
                row.push((i as f64 * step).to_string());
                row.extend((0..n).map(|j| grid[(i, j)].to_string()));
                w.write_record(&row)?;
            }
            Ok(())
        },
    )?;
    Ok(())
}

/// Detection-reliability study: can a blind angle search find λ_min?
pub fn cmd_detect(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.system.to_params();
    let pulse = build_pulse(cfg, &params)?;
    let study = detection_study(
        &params,
        &pulse,
        cfg.detect.cooled_n_0,
        &DetectionSearch::default(),
        cfg.detect.grid_n,
    )
    .map_err(compute_err)?;

    ensure_dir(out)?;
    let header = ArtifactHeader::new(cfg);
    #[derive(Serialize)]
    struct DetectArtifact<'a> {
        #[serde(flatten)]
        header: &'a ArtifactHeader<'a>,
        report: &'a sqzopt_core::harness::DetectionReport,
    }
    write_json(
        out,
        "detect_report.json",
        &DetectArtifact {
            header: &header,
            report: &study.report,
        },
    )?;
    write_landscape_csv(out, "landscape_thermal.csv", &header, &study.landscape_thermal)?;
    write_landscape_csv(out, "landscape_cooled.csv", &header, &study.landscape_cooled)?;
    for (label, o) in [("thermal", &study.report.thermal), ("cooled", &study.report.cooled)] {
        println!(
            "detect[{label}]: n_0 = {:.3e}, gap = {:+.3e}, trapped = {}",
            o.n_0, o.gap, o.trapped
        );
    }
    println!("detect: wrote {}", out.join("detect_report.json").display());
    Ok(())
}

/// Stand-alone angle-landscape export for the configured pulse.
pub fn cmd_landscape(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.system.to_params();
    let pulse = build_pulse(cfg, &params)?;
    let u = integrate_covariance(&params, &pulse, &initial_covariance(&params))
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let grid = angle_landscape(&u.bipartite(), cfg.landscape.grid_n);

    ensure_dir(out)?;
    let header = ArtifactHeader::new(cfg);
    write_landscape_csv(out, "landscape.csv", &header, &grid)?;
    println!(
        "landscape: {}x{} grid -> {}",
        grid.nrows() + 1,
        grid.ncols() + 1,
        out.join("landscape.csv").display()
    );
    Ok(())
}

/// Prints a digest of the artifacts found in the output directory,
/// rejecting files from unknown schema majors.
pub fn cmd_report(out: &Path) -> Result<(), CliError> {
    let mut found = 0;
    for name in [
        "simulate.json",
        "summary.json",
        "noisy_summary.json",
        "sweep.json",
        "detect_report.json",
    ] {
        let path = out.join(name);
        if !path.exists() {
            continue;
        }
        found += 1;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{} is not JSON: {e}", path.display())))?;
        let version = value["schema_version"].as_str().unwrap_or_default();
        check_schema(version)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        println!("== {} (schema {version}, seed {})", name, value["seed"]);
        match name {
            "simulate.json" => println!(
                "   lambda_min = {}, S_gen = {} dB",
                value["lambda_min"], value["s_gen"]
            ),
            "summary.json" | "noisy_summary.json" => {
                let s = &value["summary"];
                println!(
                    "   {} repeats: best S_gen min/mean/max = {}/{}/{} dB",
                    s["n_repeats"], s["min_db"], s["mean_db"], s["max_db"]
                );
                if let Some(m) = value.get("noiseless_mean").and_then(|v| v.as_f64()) {
                    println!("   noiseless re-evaluated mean = {m} dB");
                }
            }
            "sweep.json" => {
                for p in value["points"].as_array().into_iter().flatten() {
                    println!(
                        "   gamma_heat = {}: best {} dB, mean {} dB",
                        p["gamma_heat"], p["best_db"], p["mean_db"]
                    );
                }
            }
            "detect_report.json" => {
                for label in ["thermal", "cooled"] {
                    let o = &value["report"][label];
                    println!(
                        "   {label}: n_0 = {}, gap = {}, trapped = {}",
                        o["n_0"], o["gap"], o["trapped"]
                    );
                }
            }
            _ => unreachable!(),
        }
    }
    if found == 0 {
        return Err(CliError::Config(format!(
            "no artifacts found in {}",
            out.display()
        )));
    }
    Ok(())
}
