//! Matrix-exponential solution of the rotating-wave envelope system.
//!
//! For constant coupling on the blue sideband the envelope drift and
//! diffusion matrices are time independent ([`super::rwa_envelope_matrices`]),
//! so the cavity–mechanics covariance admits the closed-form semigroup
//! solution V(t) = e^{At} V(0) e^{Aᵀt} + ∫₀ᵗ e^{As} D e^{Aᵀs} ds, and the
//! detected-mode second moments follow by composing the input–output
//! relation with the output-profile weighting.  No ODE stepping is involved:
//! the solver advances node-to-node with one precomputed matrix exponential
//! and accumulates the profile integrals by Simpson quadrature, which makes
//! it an independent oracle for the adaptive integrator.
//!
//! The inner running integrals (the correlation of the output mode with the
//! intracavity field at earlier times) are advanced with the same semigroup
//! step and a per-slice Simpson increment — the system covariance is
//! propagated on a half-step grid to supply the midpoint — so the whole
//! computation is a single forward sweep with O(1) state and fourth-order
//! accuracy in the grid spacing.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SMatrix};

use super::covariance::BipartiteCovariance;
use super::matrices::rwa_envelope_matrices;
use super::DynamicsError;
use crate::params::SystemParams;
use crate::pulses::Profile;

/// Number of grid points for [`optimal_fout_constant`]'s sampled profile.
const FOUT_GRID: usize = 2048;

/// Grid resolution and guards for [`rwa_covariance_constant_with`].
#[derive(Debug, Clone)]
pub struct RwaConfig {
    /// Minimum number of Simpson panels.
    pub n_grid_min: usize,
    /// Panels per unit time (in 1/κ); the denser of the two wins.
    pub n_grid_per_unit_time: f64,
    /// Covariance entries beyond this magnitude abort with
    /// [`DynamicsError::GainOverflow`].
    pub overflow_guard: f64,
}

impl Default for RwaConfig {
    fn default() -> Self {
        Self {
            n_grid_min: 4096,
            n_grid_per_unit_time: 512.0,
            overflow_guard: 1e250,
        }
    }
}

/// Analytic rotating-wave covariance for a constant-coupling pulse, with
/// default grid resolution.
///
/// `fout` must already be normalized to unit square-integral; it is used
/// as-is.  Returns the mechanics⊗output bipartite covariance at t = τ.
pub fn rwa_covariance_constant(
    params: &SystemParams,
    g: f64,
    tau: f64,
    fout: &Profile,
) -> Result<BipartiteCovariance, DynamicsError> {
    rwa_covariance_constant_with(params, g, tau, fout, &RwaConfig::default())
}

/// [`rwa_covariance_constant`] with explicit grid configuration.
pub fn rwa_covariance_constant_with(
    params: &SystemParams,
    g: f64,
    tau: f64,
    fout: &Profile,
    config: &RwaConfig,
) -> Result<BipartiteCovariance, DynamicsError> {
    let (a, d_diff) = rwa_envelope_matrices(params, g);
    let sigma_v = params.sigma_v;
    let sqrt_2k = (2.0 * params.kappa).sqrt();

    // Simpson grid: an even number of intervals of width d.  A sampled
    // profile has kinks at its knots; land every kink on an even node (an
    // even number of intervals per segment) so no Simpson pair straddles
    // one and the composite rule keeps its full order.
    let panels = config
        .n_grid_min
        .max((config.n_grid_per_unit_time * tau).ceil() as usize);
    let n_intervals = match fout {
        Profile::Pwl(p) => {
            let segs = p.n_segments().max(1);
            let per_seg = (2 * panels).div_ceil(segs).div_ceil(2) * 2;
            per_seg * segs
        }
        _ => 2 * panels,
    };
    let d = tau / n_intervals as f64;

    // Half-node semigroup step and its diffusion increment
    // W = ∫₀^{d/2} e^{As} D e^{Aᵀs} ds, via the block-triangular exponential
    // of [[−A, D], [0, Aᵀ]].  The system covariance is propagated on the
    // half-step grid so the running integrals below can use a midpoint.
    let e_half = (a * (d / 2.0)).exp();
    let e_step = e_half * e_half;
    let w_half = {
        let mut m = SMatrix::<f64, 8, 8>::zeros();
        m.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a));
        m.fixed_view_mut::<4, 4>(0, 4).copy_from(&d_diff);
        m.fixed_view_mut::<4, 4>(4, 4).copy_from(&a.transpose());
        let em = (m * (d / 2.0)).exp();
        let b3 = em.fixed_view::<4, 4>(4, 4).into_owned();
        let b2 = em.fixed_view::<4, 4>(0, 4).into_owned();
        b3.transpose() * b2
    };
    if !(e_half.amax().is_finite() && w_half.amax().is_finite()) {
        return Err(DynamicsError::GainOverflow {
            magnitude: e_half.amax().max(w_half.amax()),
        });
    }

    // Output-field coupling into the cavity quadratures: dv = √(2κ)·(cavity).
    let lc = Matrix4x2::new(
        sqrt_2k, 0.0, //
        0.0, sqrt_2k, //
        0.0, 0.0, //
        0.0, 0.0,
    );
    let e_half_lc = e_half * lc;
    let e_step_lc = e_step * lc;

    // Running state, advanced node by node:
    //   v      — system covariance V(s)
    //   kk     — K(s) = ∫₀^s f(u) V(u) e^{Aᵀ(s−u)} du
    //   gg     — G(s) = ∫₀^s f(u) e^{A(s−u)} du · Lc
    //   cross_v, cross_n — Simpson sums Σ w f e^{A(τ−s)} V(s) and ·Lc,
    //                      folded forward so nothing is stored per node.
    let n0 = params.n_0;
    let mut v = Matrix4::from_diagonal(&nalgebra::Vector4::new(
        1.0,
        1.0,
        2.0 * n0 + 1.0,
        2.0 * n0 + 1.0,
    ));
    let mut kk = Matrix4::zeros();
    let mut gg = Matrix4x2::zeros();
    let mut cross_v = Matrix4::zeros();
    let mut cross_n = Matrix4x2::zeros();
    let mut s_kk = Matrix2::zeros();
    let mut s_z = Matrix2::zeros();
    let mut int_f2 = 0.0;

    let weight = |k: usize| -> f64 {
        if k == 0 || k == n_intervals {
            d / 3.0
        } else if k % 2 == 1 {
            4.0 * d / 3.0
        } else {
            2.0 * d / 3.0
        }
    };

    let mut f_prev = fout.eval_unchecked(0.0, tau);
    // Node 0 contributions (kk, gg are zero there).
    let w0 = weight(0);
    cross_v += v * (w0 * f_prev);
    cross_n += lc * (w0 * f_prev);
    int_f2 += w0 * f_prev * f_prev;

    for k in 1..=n_intervals {
        let t_k = k as f64 * d;
        let f_half = fout.eval_unchecked(t_k - d / 2.0, tau);
        let f_k = fout.eval_unchecked(t_k, tau);
        // Two half-steps give the midpoint covariance for a Simpson
        // advancement of the running integrals: the per-node increments of
        // K and G are ∫ over one slice, evaluated at its ends and midpoint.
        let v_half = e_half * v * e_half.transpose() + w_half;
        let v_next = e_half * v_half * e_half.transpose() + w_half;
        kk = kk * e_step.transpose()
            + (v * e_step.transpose() * f_prev
                + v_half * e_half.transpose() * (4.0 * f_half)
                + v_next * f_k)
                * (d / 6.0);
        gg = e_step * gg
            + (e_step_lc * f_prev + e_half_lc * (4.0 * f_half) + lc * f_k) * (d / 6.0);
        v = v_next;

        let w = weight(k);
        let wf = w * f_k;
        s_kk += kk.fixed_view::<2, 2>(0, 0) * wf;
        s_z += gg.fixed_view::<2, 2>(0, 0) * wf;
        cross_v = e_step * cross_v + v * wf;
        cross_n = e_step * cross_n + lc * wf;
        int_f2 += wf * f_k;
        f_prev = f_k;

        let magnitude = v.amax();
        if !(magnitude < config.overflow_guard) {
            return Err(DynamicsError::GainOverflow { magnitude });
        }
    }

    // Detected-mode variance and its correlation with the final system state.
    let var_o = (s_kk + s_kk.transpose()) * (2.0 * params.kappa)
        + Matrix2::identity() * (int_f2 * sigma_v)
        - (s_z + s_z.transpose()) * (sqrt_2k * sigma_v);
    let cov_vo = cross_v.fixed_view::<4, 2>(0, 0) * sqrt_2k - cross_n;

    let mut out = Matrix4::zeros();
    out.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&v.fixed_view::<2, 2>(2, 2).into_owned());
    let mech_out = cov_vo.fixed_view::<2, 2>(2, 0).into_owned();
    out.fixed_view_mut::<2, 2>(0, 2).copy_from(&mech_out);
    out.fixed_view_mut::<2, 2>(2, 0)
        .copy_from(&mech_out.transpose());
    out.fixed_view_mut::<2, 2>(2, 2).copy_from(&var_o);
    Ok(BipartiteCovariance {
        v: (out + out.transpose()) * 0.5,
    })
}

/// The detection profile that reads out the mechanical quadratures with the
/// best attainable weight for a constant-coupling pulse.
///
/// The output field's dependence on the initial mechanical state carries the
/// weight T_m(t), the mechanics→cavity entry of the rotating-wave transfer
/// matrix; matching f_out to T_m maximizes the collected mechanical signal.
/// The profile is sampled on a dense grid, stored piecewise linearly, and
/// normalized to unit square-integral.  For g = 0 there is no mechanical
/// signal at all and the flat profile 1/√τ is returned.
pub fn optimal_fout_constant(params: &SystemParams, g: f64, tau: f64) -> Profile {
    let flat = Profile::Constant(1.0 / tau.sqrt());
    if g == 0.0 {
        return flat;
    }
    // Eigenvalues of the 2×2 rotating-wave transfer block [[−κ, g], [g, −γ/2]]:
    // T_m(t) ∝ e^{λ₊t} − e^{λ₋t}.  Sampled with the overall scale e^{−λ₊τ}
    // folded in so the knots never overflow; normalization removes it anyway.
    let half_sum = -(params.kappa + params.gamma / 2.0) / 2.0;
    let disc = (((params.kappa - params.gamma / 2.0) / 2.0).powi(2) + g * g).sqrt();
    let lam_plus = half_sum + disc;
    let lam_minus = half_sum - disc;
    let knots: Vec<f64> = (0..FOUT_GRID)
        .map(|i| {
            let t = tau * i as f64 / (FOUT_GRID - 1) as f64;
            (lam_plus * (t - tau)).exp() - (lam_minus * t - lam_plus * tau).exp()
        })
        .collect();
    match Profile::pwl(knots, tau).and_then(|p| p.normalized(tau)) {
        Ok(profile) => profile,
        // Underflowed shape (vanishing coupling): no preferred weighting.
        Err(_) => flat,
    }
}
