//! Experiment configuration: TOML schema, command-line overrides, and
//! validation.
//!
//! Every artifact the commands write embeds the fully resolved
//! [`ExperimentConfig`] (after file, `--override`, and flag resolution), so
//! each output is self-describing and reproducible from its own header.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqzopt_core::harness::LayoutKind;
use sqzopt_core::params::SystemParams;

use crate::CliError;

/// Environment variable consulted for the default output directory when
/// neither `--out` nor `run.out_dir` is set.
pub const OUT_DIR_ENV: &str = "SQZOPT_OUT_DIR";

/// Fallback output directory when nothing else names one.
pub const OUT_DIR_DEFAULT: &str = "sqzopt-runs";

/// Top-level experiment description.  Unknown keys anywhere in the file are
/// rejected before any run starts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub run: RunSection,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
    pub detect: DetectSection,
    pub landscape: LandscapeSection,
    /// Explicit pulse for `simulate`, `detect`, and `landscape`.
    pub pulse: Option<PulseSection>,
}

/// Physical system parameters, in κ = 1 units (all rates relative to the
/// optical damping).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub kappa: f64,
    pub gamma: f64,
    pub omega_m: f64,
    pub n_th: f64,
    pub n_0: f64,
    pub sigma_v: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::default();
        Self {
            kappa: p.kappa,
            gamma: p.gamma,
            omega_m: p.omega_m,
            n_th: p.n_th,
            n_0: p.n_0,
            sigma_v: p.sigma_v,
        }
    }
}

impl SystemSection {
    pub fn to_params(&self) -> SystemParams {
        SystemParams {
            kappa: self.kappa,
            gamma: self.gamma,
            omega_m: self.omega_m,
            n_th: self.n_th,
            n_0: self.n_0,
            sigma_v: self.sigma_v,
        }
    }
}

/// What to optimize and how the run is seeded and persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Variable layout: `const_coupling`, `pwl_coupling_fout`, `pwl_all`,
    /// `fout_only`, or `detection_angles`.
    pub layout: LayoutKind,
    /// Evaluation budget; omitted → the layout's published default.
    pub schedule: Option<ScheduleSection>,
    pub seed: u64,
    pub repeats: usize,
    pub out_dir: Option<PathBuf>,
    /// Per-dimension `[lo, hi]` replacing the layout's search box.
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Frozen `[g, gain_proportion]` operating point for `fout_only`.
    pub fout_base: Option<[f64; 2]>,
    /// Path to a `const_coupling` summary.json whose best vector freezes
    /// the `fout_only` operating point.
    pub fout_base_from: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            layout: LayoutKind::ConstCoupling,
            schedule: None,
            seed: 1234,
            repeats: 50,
            out_dir: None,
            bounds: None,
            fout_base: None,
            fout_base_from: None,
        }
    }
}

/// Evaluation budget per optimization phase.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_initial: usize,
    pub n_explore: usize,
    pub n_exploit: usize,
}

/// Control-noise study settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Relative coupling-noise strength σ (truncated at ±3σ).
    pub rel_sigma: f64,
    /// Fresh-noise re-evaluations of the winning incumbent (0 = skip).
    pub n_reevaluate: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            rel_sigma: 0.1,
            n_reevaluate: 0,
        }
    }
}

/// Thermal sweep: the list of reheating rates Γ (in κ units) to optimize at.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gamma_heat: Vec<f64>,
}

/// Detection-reliability study settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    /// Pre-cooled initial occupancy compared against the thermal start.
    pub cooled_n_0: f64,
    /// Grid points per axis of the exported angle landscapes.
    pub grid_n: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            cooled_n_0: 100.0,
            grid_n: 61,
        }
    }
}

/// Stand-alone angle-landscape export settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSection {
    pub grid_n: usize,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self { grid_n: 64 }
    }
}

/// An explicit pulse: constant coupling g over duration τ, optional constant
/// detuning offset, optional piecewise-linear measurement profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub g: f64,
    pub tau: f64,
    #[serde(default = "one")]
    pub gain_proportion: f64,
    #[serde(default)]
    pub detuning_offset: f64,
    /// Measurement-profile knots over [0, τ]; omitted → the analytic
    /// optimal profile for the constant pulse.
    #[serde(default)]
    pub fout: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    /// Loads the config file (pure defaults when `path` is `None`), applies
    /// `key=value` overrides onto the raw TOML, and deserializes with
    /// unknown keys rejected.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for entry in overrides {
            apply_override(&mut table, entry)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Flag/env resolution: `--seed`, `--repeats`, and the output directory
    /// (`--out` > `run.out_dir` > `$SQZOPT_OUT_DIR` > `sqzopt-runs`).  The
    /// resolved values are written back so the embedded config is complete.
    pub fn resolve(
        &mut self,
        seed: Option<u64>,
        repeats: Option<usize>,
        out: Option<PathBuf>,
    ) -> PathBuf {
        if let Some(s) = seed {
            self.run.seed = s;
        }
        if let Some(r) = repeats {
            self.run.repeats = r;
        }
        let out_dir = out
            .or_else(|| self.run.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(OUT_DIR_DEFAULT));
        self.run.out_dir = Some(out_dir.clone());
        out_dir
    }

    /// Schema validation beyond what serde can express; runs before any
    /// command touches the system.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        let checks: [(&str, bool); 6] = [
            ("system.kappa must be positive and finite", s.kappa > 0.0 && s.kappa.is_finite()),
            ("system.gamma must be nonnegative and finite", s.gamma >= 0.0 && s.gamma.is_finite()),
            (
                "system.omega_m must be positive and finite",
                s.omega_m > 0.0 && s.omega_m.is_finite(),
            ),
            ("system.n_th must be nonnegative and finite", s.n_th >= 0.0 && s.n_th.is_finite()),
            ("system.n_0 must be nonnegative and finite", s.n_0 >= 0.0 && s.n_0.is_finite()),
            ("system.sigma_v must be at least one (vacuum)", s.sigma_v >= 1.0),
        ];
        for (message, ok) in checks {
            if !ok {
                return Err(CliError::Config(message.into()));
            }
        }
        if self.run.repeats == 0 {
            return Err(CliError::Config("run.repeats must be at least 1".into()));
        }
        if let Some(sched) = &self.run.schedule {
            if sched.n_initial < 1 || sched.n_explore < 1 || sched.n_exploit < 1 {
                return Err(CliError::Config(
                    "run.schedule phases must each have at least one evaluation".into(),
                ));
            }
        }
        if let Some(bounds) = &self.run.bounds {
            if let Some(i) = bounds
                .iter()
                .position(|b| !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]))
            {
                return Err(CliError::Config(format!(
                    "run.bounds[{i}] is not a finite ordered [lo, hi] pair"
                )));
            }
        }
        if !(self.noise.rel_sigma >= 0.0 && self.noise.rel_sigma.is_finite()) {
            return Err(CliError::Config(
                "noise.rel_sigma must be nonnegative and finite".into(),
            ));
        }
        if let Some(g) = self
            .sweep
            .gamma_heat
            .iter()
            .find(|g| !(**g > 0.0 && g.is_finite()))
        {
            return Err(CliError::Config(format!(
                "sweep.gamma_heat entries must be positive and finite, got {g}"
            )));
        }
        if !(self.detect.cooled_n_0 >= 0.0 && self.detect.cooled_n_0.is_finite()) {
            return Err(CliError::Config(
                "detect.cooled_n_0 must be nonnegative and finite".into(),
            ));
        }
        if self.detect.grid_n < 2 || self.landscape.grid_n < 2 {
            return Err(CliError::Config("landscape grids need at least 2 points".into()));
        }
        if let Some(p) = &self.pulse {
            if !(p.g >= 0.0 && p.g.is_finite()) {
                return Err(CliError::Config("pulse.g must be nonnegative and finite".into()));
            }
            if !(p.tau > 0.0 && p.tau.is_finite()) {
                return Err(CliError::Config("pulse.tau must be positive and finite".into()));
            }
            if !(p.gain_proportion > 0.0 && p.gain_proportion <= 1.0) {
                return Err(CliError::Config("pulse.gain_proportion must be in (0, 1]".into()));
            }
            if p.detuning_offset.abs() >= 0.5 * self.system.omega_m {
                return Err(CliError::Config(
                    "pulse.detuning_offset must lie strictly inside ±omega_m/2".into(),
                ));
            }
            if let Some(fout) = &p.fout {
                if fout.len() < 2 || fout.iter().any(|k| !k.is_finite()) {
                    return Err(CliError::Config(
                        "pulse.fout needs at least 2 finite knots".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The explicit pulse section, required by simulate/detect/landscape.
    pub fn pulse_required(&self) -> Result<&PulseSection, CliError> {
        self.pulse.as_ref().ok_or_else(|| {
            CliError::Config("this command needs a [pulse] section (g, tau, ...)".into())
        })
    }
}

/// Applies one `key=value` override onto the raw TOML table, creating
/// intermediate tables as needed.  The value is parsed with TOML semantics
/// (numbers, booleans, arrays, quoted strings); anything unparseable is
/// taken as a bare string.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<(), CliError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{entry}' is not KEY=VALUE")))?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| {
        CliError::Config(format!("override '{entry}' has an empty key"))
    })?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("override '{entry}': '{part}' is not a table"))
            })?;
    }
    node.insert(leaf.to_owned(), parse_toml_scalar(raw));
    Ok(())
}

fn parse_toml_scalar(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}
