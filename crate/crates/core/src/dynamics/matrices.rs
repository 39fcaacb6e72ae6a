//! Drift and diffusion matrix constructors.
//!
//! All matrices are expressed in the drive frame over the quadrature
//! ordering (X_c, Y_c, X_m, Y_m[, 𝒳_out, 𝒴_out]), rates in units of κ.

use nalgebra::{Matrix4, Matrix6};

use crate::params::SystemParams;

/// Drift matrix A of the cavity⊗mechanics system at coupling `g` and full
/// drive detuning `delta` (Δ = −Ω_m on the blue sideband):
///
/// ```text
///        ( −κ    Δ    0    0  )
///  A  =  ( −Δ   −κ   2g    0  )
///        (  0    0    0   Ω_m )
///        ( 2g    0  −Ω_m  −γ  )
/// ```
pub fn drift_matrix(params: &SystemParams, g: f64, delta: f64) -> Matrix4<f64> {
    let SystemParams { kappa, gamma, omega_m, .. } = *params;
    Matrix4::new(
        -kappa, delta, 0.0, 0.0, //
        -delta, -kappa, 2.0 * g, 0.0, //
        0.0, 0.0, 0.0, omega_m, //
        2.0 * g, 0.0, -omega_m, -gamma,
    )
}

/// Extended 6×6 drift matrix B: the cavity⊗mechanics drift in the top-left
/// block, plus the output-mode coupling rows √(2κ)·f_out on the cavity
/// columns.
pub fn extended_drift(params: &SystemParams, g: f64, delta: f64, fout_val: f64) -> Matrix6<f64> {
    let mut b = Matrix6::zeros();
    b.fixed_view_mut::<4, 4>(0, 0)
        .copy_from(&drift_matrix(params, g, delta));
    let s2k = (2.0 * params.kappa).sqrt();
    b[(4, 0)] = s2k * fout_val;
    b[(5, 1)] = s2k * fout_val;
    b
}

/// Extended 6×6 diffusion matrix F: cavity shot noise diag(2κ, 2κ),
/// mechanical heating diag(0, 4Γ), the cavity⊗output cross blocks
/// −√(2κ)·f_out·σ_v, and the output block 2κ·f_out²·σ_v·I₂.
///
/// This is the printed drive-frame form. [`super::integrate_covariance`]
/// assembles its diffusion internally with the detected-mode noise
/// normalized so that a unit-normalized f_out collecting pure vacuum ends at
/// output variance exactly 1; see the integrator docs.
pub fn extended_diffusion(params: &SystemParams, fout_val: f64) -> Matrix6<f64> {
    let SystemParams { kappa, sigma_v, .. } = *params;
    let gamma_heat = params.gamma_heat();
    let mut f = Matrix6::zeros();
    f[(0, 0)] = 2.0 * kappa;
    f[(1, 1)] = 2.0 * kappa;
    f[(3, 3)] = 4.0 * gamma_heat;
    let cross = -(2.0 * kappa).sqrt() * fout_val * sigma_v;
    f[(0, 4)] = cross;
    f[(4, 0)] = cross;
    f[(1, 5)] = cross;
    f[(5, 1)] = cross;
    let out = 2.0 * kappa * fout_val * fout_val * sigma_v;
    f[(4, 4)] = out;
    f[(5, 5)] = out;
    f
}

/// Time-independent drift and diffusion of the rotating-wave envelope system
/// for resonant blue-sideband driving:
///
/// ```text
/// A_rwa = ( −κ·I₂   g·σ₁ )      D_rwa = 2·diag(κ, κ, Γ, Γ)
///         (  g·σ₁  −γ/2·I₂ )
/// ```
///
/// with σ₁ the off-diagonal Pauli pattern coupling (X_c, Y_m) and (Y_c, X_m).
pub fn rwa_envelope_matrices(params: &SystemParams, g: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    let SystemParams { kappa, gamma, .. } = *params;
    let gamma_heat = params.gamma_heat();
    let mut a = Matrix4::zeros();
    a[(0, 0)] = -kappa;
    a[(1, 1)] = -kappa;
    a[(2, 2)] = -gamma / 2.0;
    a[(3, 3)] = -gamma / 2.0;
    a[(0, 3)] = g;
    a[(3, 0)] = g;
    a[(1, 2)] = g;
    a[(2, 1)] = g;
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(
        2.0 * kappa,
        2.0 * kappa,
        2.0 * gamma_heat,
        2.0 * gamma_heat,
    ));
    (a, d)
}
