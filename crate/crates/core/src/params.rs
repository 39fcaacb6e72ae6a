//! Physical parameters of the open optomechanical system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed physical parameters, all rates in units of the optical linewidth κ.
///
/// The derived heating rate Γ = γ·n_th is exposed through
/// [`SystemParams::gamma_heat`] and always equals the product exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Optical linewidth κ (the rate normalization unit).
    pub kappa: f64,
    /// Mechanical damping rate γ.
    pub gamma: f64,
    /// Mechanical frequency Ω_m.
    pub omega_m: f64,
    /// Mean thermal occupation of the mechanical bath.
    pub n_th: f64,
    /// Initial mechanical occupation.
    pub n_0: f64,
    /// Shot-noise variance of the optical input (vacuum, fixed 1).
    pub sigma_v: f64,
}

/// Validation failure for [`SystemParams`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    /// A rate that must be strictly positive was zero, negative, or non-finite.
    #[error("parameter {name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    /// An occupation number was negative or non-finite.
    #[error("parameter {name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    /// The shot-noise variance is fixed to 1 by the quadrature normalization.
    #[error("sigma_v is fixed to 1, got {0}")]
    SigmaV(f64),
}

impl SystemParams {
    /// Builds a validated parameter set. `sigma_v` is pinned to 1 by the
    /// vacuum-variance normalization; use the struct fields directly only
    /// for serialization round-trips.
    pub fn new(kappa: f64, gamma: f64, omega_m: f64, n_th: f64, n_0: f64) -> Result<Self, ParamsError> {
        let positive = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(value)
            } else {
                Err(ParamsError::NonPositive { name, value })
            }
        };
        let occupation = |name: &'static str, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(value)
            } else {
                Err(ParamsError::Negative { name, value })
            }
        };
        Ok(Self {
            kappa: positive("kappa", kappa)?,
            gamma: positive("gamma", gamma)?,
            omega_m: positive("omega_m", omega_m)?,
            n_th: occupation("n_th", n_th)?,
            n_0: occupation("n_0", n_0)?,
            sigma_v: 1.0,
        })
    }

    /// Re-validates a deserialized value (also checks `sigma_v == 1`).
    pub fn validate(&self) -> Result<(), ParamsError> {
        Self::new(self.kappa, self.gamma, self.omega_m, self.n_th, self.n_0)?;
        if self.sigma_v != 1.0 {
            return Err(ParamsError::SigmaV(self.sigma_v));
        }
        Ok(())
    }

    /// Heating rate Γ = γ·n_th of the mechanical mode.
    pub fn gamma_heat(&self) -> f64 {
        self.gamma * self.n_th
    }

    /// Returns a copy with the initial occupation replaced.
    pub fn with_n_0(mut self, n_0: f64) -> Self {
        self.n_0 = n_0;
        self
    }

    /// Returns a copy with the bath occupation replaced (Γ scales with it).
    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.n_th = n_th;
        self
    }
}

impl Default for SystemParams {
    /// Reference levitated-particle parameter set: κ=1, γ=2.8e-10·κ,
    /// Ω_m=2κ, n_th=n_0=2.26e8 (so Γ≈0.063κ), σ_v=1.
    fn default() -> Self {
        Self {
            kappa: 1.0,
            gamma: 2.8e-10,
            omega_m: 2.0,
            n_th: 2.26e8,
            n_0: 2.26e8,
            sigma_v: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_expected_heating_rate() {
        let p = SystemParams::default();
        assert!((p.gamma_heat() - 0.06328).abs() < 1e-12);
        assert_eq!(p.gamma_heat(), p.gamma * p.n_th);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_rates() {
        assert!(SystemParams::new(0.0, 1e-10, 2.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, -1.0, 2.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1e-10, f64::NAN, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1e-10, 2.0, -0.5, 1.0).is_err());
    }

    #[test]
    fn zero_occupations_are_valid() {
        let p = SystemParams::new(1.0, 2.8e-10, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(p.gamma_heat(), 0.0);
    }

    #[test]
    fn sigma_v_is_pinned() {
        let mut p = SystemParams::default();
        p.sigma_v = 2.0;
        assert!(matches!(p.validate(), Err(ParamsError::SigmaV(_))));
    }
}
