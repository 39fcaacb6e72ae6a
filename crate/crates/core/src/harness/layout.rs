//! Optimization-variable layouts: how a flat vector maps to a pulse (or a
//! detection-angle pair), with the box bounds and evaluation budgets each
//! search uses.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bayesopt::PhaseSchedule;
use crate::dynamics::optimal_fout_constant;
use crate::params::SystemParams;
use crate::pulses::{
    duration_from_gain, Profile, PulseConfig, DEFAULT_GAIN_LIMIT, DEFAULT_TIMESLOTS, TAU_MAX,
    TAU_MIN,
};

/// Knots per piecewise-linear profile (slice boundaries of the default
/// five-slot pulse).
pub const N_KNOTS: usize = DEFAULT_TIMESLOTS + 1;

/// Coupling-strength search range, in units of κ.
pub const COUPLING_MIN: f64 = 0.01;
pub const COUPLING_MAX: f64 = 2.0;

/// Gain-proportion search range (upper end is the full budget).
pub const PROPORTION_MIN: f64 = 0.01;

/// Raw measurement-profile knots live in a symmetric box; normalization
/// removes their scale, so only the shape matters.
pub const FOUT_KNOT_BOUND: f64 = 1.0;

/// Relative shrink keeping detuning knots strictly inside (−Ω_m/2, Ω_m/2).
pub const DETUNING_MARGIN: f64 = 1e-6;

/// The five experiment parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Top-hat pulse: (g, p_gain), 2 variables.
    ConstCoupling,
    /// Piecewise-linear coupling and measurement profile: 6 coupling knots,
    /// p_gain, 6 raw f_out knots — 13 variables.
    PwlCouplingFout,
    /// Adds 6 detuning-offset knots to the above — 19 variables.
    PwlAll,
    /// Measurement profile alone at a frozen (g, τ): 6 variables.
    FoutOnly,
    /// Homodyne mode rotations (θ_c, θ_m): 2 variables.
    DetectionAngles,
}

/// Frozen top-hat operating point for the [`LayoutKind::FoutOnly`] layout,
/// taken from a previously optimized constant-coupling record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedBase {
    pub g: f64,
    pub tau: f64,
    pub gain_proportion: f64,
}

/// A decoded variable vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Pulse(PulseConfig),
    Angles { theta_c: f64, theta_m: f64 },
}

/// Maps flat optimization vectors to validated configurations and back.
///
/// The layout snapshots the scalars its geometry depends on (Ω_m for the
/// detuning box, κ and the gain limit for the duration formula) at
/// construction; pass the same system parameters to
/// [`VariableLayout::decode`] that built the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    kind: LayoutKind,
    omega_m: f64,
    kappa: f64,
    gain_limit: f64,
    /// Present only for [`LayoutKind::FoutOnly`].
    fixed: Option<FixedBase>,
    /// Replaces the built-in search box when set (narrowed studies); decode
    /// semantics are unaffected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds_override: Option<Vec<(f64, f64)>>,
}

impl VariableLayout {
    /// Builds a layout for any kind except [`LayoutKind::FoutOnly`] (which
    /// needs a stored operating point; see [`VariableLayout::fout_only`]).
    pub fn new(kind: LayoutKind, params: &SystemParams) -> Self {
        assert!(
            kind != LayoutKind::FoutOnly,
            "FoutOnly needs a frozen (g, tau); use VariableLayout::fout_only"
        );
        Self {
            kind,
            omega_m: params.omega_m,
            kappa: params.kappa,
            gain_limit: DEFAULT_GAIN_LIMIT,
            fixed: None,
            bounds_override: None,
        }
    }

    /// Builds the measurement-profile-only layout around a frozen top-hat
    /// operating point.
    pub fn fout_only(params: &SystemParams, base: FixedBase) -> Self {
        Self {
            kind: LayoutKind::FoutOnly,
            omega_m: params.omega_m,
            kappa: params.kappa,
            gain_limit: DEFAULT_GAIN_LIMIT,
            fixed: Some(base),
            bounds_override: None,
        }
    }

    /// Replaces the search box with `bounds`, which must give one finite
    /// ordered (lo, hi) interval per variable.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self, HarnessError> {
        if bounds.len() != self.dims() {
            return Err(HarnessError::DimensionMismatch {
                got: bounds.len(),
                want: self.dims(),
            });
        }
        if let Some(index) = bounds
            .iter()
            .position(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(HarnessError::InvalidBounds { index });
        }
        self.bounds_override = Some(bounds);
        Ok(self)
    }

    /// Builds the measurement-profile-only layout from the best vector of a
    /// constant-coupling optimization (the usual provenance of the frozen
    /// point).
    pub fn fout_only_from_best(
        params: &SystemParams,
        best_const_vector: &[f64],
    ) -> Result<Self, HarnessError> {
        let const_layout = Self::new(LayoutKind::ConstCoupling, params);
        let Decoded::Pulse(pulse) = const_layout.decode(best_const_vector, params)? else {
            unreachable!("ConstCoupling decodes to a pulse");
        };
        let Profile::Constant(g) = *pulse.coupling() else {
            unreachable!("ConstCoupling holds a constant profile");
        };
        Ok(Self::fout_only(
            params,
            FixedBase {
                g,
                tau: pulse.tau(),
                gain_proportion: pulse.gain_proportion(),
            },
        ))
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    /// Number of optimization variables.
    pub fn dims(&self) -> usize {
        match self.kind {
            LayoutKind::ConstCoupling => 2,
            LayoutKind::PwlCouplingFout => 2 * N_KNOTS + 1,
            LayoutKind::PwlAll => 3 * N_KNOTS + 1,
            LayoutKind::FoutOnly => N_KNOTS,
            LayoutKind::DetectionAngles => 2,
        }
    }

    /// Per-dimension box bounds, ordered as the vector is.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        if let Some(bounds) = &self.bounds_override {
            return bounds.clone();
        }
        let coupling = (COUPLING_MIN, COUPLING_MAX);
        let proportion = (PROPORTION_MIN, 1.0);
        let fout = (-FOUT_KNOT_BOUND, FOUT_KNOT_BOUND);
        let half = 0.5 * self.omega_m * (1.0 - DETUNING_MARGIN);
        match self.kind {
            LayoutKind::ConstCoupling => vec![coupling, proportion],
            LayoutKind::PwlCouplingFout => {
                let mut b = vec![coupling; N_KNOTS];
                b.push(proportion);
                b.extend(std::iter::repeat_n(fout, N_KNOTS));
                b
            }
            LayoutKind::PwlAll => {
                let mut b = vec![coupling; N_KNOTS];
                b.push(proportion);
                b.extend(std::iter::repeat_n(fout, N_KNOTS));
                b.extend(std::iter::repeat_n((-half, half), N_KNOTS));
                b
            }
            LayoutKind::FoutOnly => vec![fout; N_KNOTS],
            LayoutKind::DetectionAngles => vec![(0.0, std::f64::consts::PI); 2],
        }
    }

    /// The evaluation budget this layout's searches use by default.
    pub fn default_schedule(&self) -> PhaseSchedule {
        match self.kind {
            LayoutKind::ConstCoupling | LayoutKind::DetectionAngles => {
                PhaseSchedule::new(40, 40, 20)
            }
            LayoutKind::PwlCouplingFout => PhaseSchedule::new(200, 200, 80),
            LayoutKind::PwlAll => PhaseSchedule::new(300, 300, 100),
            LayoutKind::FoutOnly => PhaseSchedule::new(120, 120, 50),
        }
    }

    /// Pulse duration from the amplitude-gain budget, with the hard gain
    /// limit taking precedence over the τ box.
    ///
    /// The τ floor exists for search hygiene; at high coupling it would push
    /// the realized gain exp(2·msq·τ/κ) past the physical limit, so the
    /// duration is capped at the gain boundary instead (the only regime
    /// where decoded τ may dip below `TAU_MIN`).
    fn pulse_duration(&self, msq: f64, p_gain: f64) -> f64 {
        let mut tau = duration_from_gain(msq.sqrt(), p_gain, self.gain_limit, TAU_MAX, TAU_MIN);
        if msq > 0.0 {
            tau = tau.min(self.kappa * self.gain_limit.ln() / (2.0 * msq));
        }
        tau
    }

    /// Decodes a variable vector into a configuration.
    ///
    /// Vectors are expected inside [`VariableLayout::bounds`]; out-of-box
    /// values still decode mechanically (the gain cap is enforced
    /// regardless), but carry no physical guarantee.
    pub fn decode(&self, vector: &[f64], params: &SystemParams) -> Result<Decoded, HarnessError> {
        if vector.len() != self.dims() {
            return Err(HarnessError::DimensionMismatch {
                got: vector.len(),
                want: self.dims(),
            });
        }
        let config = match self.kind {
            LayoutKind::ConstCoupling => {
                let (g, p) = (vector[0], vector[1]);
                let tau = self.pulse_duration(g * g, p);
                let fout = optimal_fout_constant(params, g, tau);
                PulseConfig::new(
                    Profile::Constant(g),
                    Profile::Constant(0.0),
                    fout,
                    tau,
                    self.gain_limit,
                    p,
                    self.kappa,
                )?
            }
            LayoutKind::PwlCouplingFout | LayoutKind::PwlAll => {
                let c = &vector[..N_KNOTS];
                let p = vector[N_KNOTS];
                let f = &vector[N_KNOTS + 1..2 * N_KNOTS + 1];
                let tau = self.pulse_duration(mean_square_knots(c), p);
                let detuning = if self.kind == LayoutKind::PwlAll {
                    Profile::pwl(vector[2 * N_KNOTS + 1..].to_vec(), tau)?
                } else {
                    Profile::Constant(0.0)
                };
                PulseConfig::new(
                    Profile::pwl(c.to_vec(), tau)?,
                    detuning,
                    Profile::pwl(f.to_vec(), tau)?,
                    tau,
                    self.gain_limit,
                    p,
                    self.kappa,
                )?
            }
            LayoutKind::FoutOnly => {
                let base = self.fixed.expect("FoutOnly always stores a base");
                PulseConfig::new(
                    Profile::Constant(base.g),
                    Profile::Constant(0.0),
                    Profile::pwl(vector.to_vec(), base.tau)?,
                    base.tau,
                    self.gain_limit,
                    base.gain_proportion,
                    self.kappa,
                )?
            }
            LayoutKind::DetectionAngles => {
                return Ok(Decoded::Angles {
                    theta_c: vector[0],
                    theta_m: vector[1],
                });
            }
        };
        Ok(Decoded::Pulse(config))
    }

    /// Inverse of [`VariableLayout::decode`] up to measurement-profile
    /// normalization: re-decoding the returned vector reproduces the
    /// configuration exactly (normalized knots re-normalize to themselves).
    pub fn encode(&self, decoded: &Decoded) -> Result<Vec<f64>, HarnessError> {
        let mismatch = || HarnessError::LayoutMismatch { kind: self.kind };
        match (self.kind, decoded) {
            (LayoutKind::ConstCoupling, Decoded::Pulse(cfg)) => {
                let Profile::Constant(g) = *cfg.coupling() else {
                    return Err(mismatch());
                };
                Ok(vec![g, cfg.gain_proportion()])
            }
            (LayoutKind::PwlCouplingFout, Decoded::Pulse(cfg)) => {
                let (Profile::Pwl(c), Profile::Pwl(f)) = (cfg.coupling(), cfg.fout()) else {
                    return Err(mismatch());
                };
                let mut v = c.knots().to_vec();
                v.push(cfg.gain_proportion());
                v.extend_from_slice(f.knots());
                Ok(v)
            }
            (LayoutKind::PwlAll, Decoded::Pulse(cfg)) => {
                let (Profile::Pwl(c), Profile::Pwl(f), Profile::Pwl(d)) =
                    (cfg.coupling(), cfg.fout(), cfg.detuning_offset())
                else {
                    return Err(mismatch());
                };
                let mut v = c.knots().to_vec();
                v.push(cfg.gain_proportion());
                v.extend_from_slice(f.knots());
                v.extend_from_slice(d.knots());
                Ok(v)
            }
            (LayoutKind::FoutOnly, Decoded::Pulse(cfg)) => {
                let Profile::Pwl(f) = cfg.fout() else {
                    return Err(mismatch());
                };
                Ok(f.knots().to_vec())
            }
            (LayoutKind::DetectionAngles, Decoded::Angles { theta_c, theta_m }) => {
                Ok(vec![*theta_c, *theta_m])
            }
            _ => Err(mismatch()),
        }
    }
}

/// Time-average of g(t)² for a piecewise-linear profile with equal segments:
/// (1/n)·Σ (a² + ab + b²)/3 over consecutive knot pairs.  Independent of τ.
pub fn mean_square_knots(knots: &[f64]) -> f64 {
    let n = knots.len().saturating_sub(1);
    if n == 0 {
        return knots.first().map_or(0.0, |k| k * k);
    }
    knots
        .windows(2)
        .map(|w| (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
        .sum::<f64>()
        / n as f64
}
