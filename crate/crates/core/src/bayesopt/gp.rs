//! Exact Gaussian-process regression with a Matérn-5/2 kernel and
//! per-dimension length-scales.
//!
//! Outputs are standardized internally (the sample mean doubles as a
//! constant prior mean), hyperparameters are chosen by multi-start ascent of
//! the log marginal likelihood with analytic gradients, and new observations
//! append to the Cholesky factor in O(M²) so the surrogate can grow with an
//! optimization run between full refits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::BayesOptError;

/// Jitter ladder tried when the Gram matrix fails to factor, in units of the
/// standardized signal variance.  The last rung is the contract limit: a
/// matrix that cannot be factored there is reported as ill-conditioned.
const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Bounds for the log-hyperparameter search, in standardized units.
const LOG_LENGTHSCALE_RANGE: (f64, f64) = (-4.6, 2.3); // ℓ ∈ [0.01, 10]
const LOG_SIGNAL_RANGE: (f64, f64) = (-3.0, 2.3); // σ_f ∈ [0.05, 10]
const LOG_NOISE_RANGE: (f64, f64) = (-10.4, 0.7); // σ_n ∈ [3e-5, 2]

/// How the observation-noise variance is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Fitted together with the kernel hyperparameters (the default: the
    /// objective may be stochastic and the surrogate should absorb it).
    Fit,
    /// Pinned to the given variance in raw output units (0 for exact
    /// interpolation of a deterministic objective).
    Fixed(f64),
}

/// Hyperparameter-search configuration.
#[derive(Debug, Clone)]
pub struct GpConfig {
    /// Local-ascent restarts for the marginal-likelihood search.
    pub n_starts: usize,
    /// Iterations of sign-adaptive gradient ascent per start.
    pub max_iters: usize,
    /// Observation-noise handling.
    pub noise: NoiseMode,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_starts: 3,
            max_iters: 60,
            noise: NoiseMode::Fit,
        }
    }
}

/// Matérn-5/2 kernel with automatic relevance determination.
#[derive(Debug, Clone)]
pub struct MaternKernel {
    /// Per-dimension length-scales, in normalized input units.
    pub lengthscales: DVector<f64>,
    /// Signal variance, in standardized output units.
    pub signal_var: f64,
}

impl MaternKernel {
    /// Scaled squared distance Σ ((a_i − b_i)/ℓ_i)².
    fn sq_dist(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            let d = (a[i] - b[i]) / self.lengthscales[i];
            s += d * d;
        }
        s
    }

    /// k(a, b) = σ²·(1 + u + u²/3)·e^{−u} with u = √(5·r²).
    fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let u = (5.0 * self.sq_dist(a, b)).sqrt();
        self.signal_var * (1.0 + u + u * u / 3.0) * (-u).exp()
    }
}

/// Exact GP posterior over a scalar objective on the unit box.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    /// Training inputs, one row per point, normalized to the unit box.
    inputs: Vec<DVector<f64>>,
    /// Raw (unstandardized) outputs.
    y: Vec<f64>,
    /// Standardization constants: z = (y − y_mean)/y_scale.
    y_mean: f64,
    y_scale: f64,
    kernel: MaternKernel,
    /// Observation-noise variance in standardized units.
    noise_var: f64,
    /// Jitter actually applied to factor the Gram matrix.
    jitter: f64,
    /// Lower Cholesky factor of K + (noise + jitter)·I.
    chol: DMatrix<f64>,
    /// (K + (noise + jitter)·I)⁻¹ z.
    alpha: DVector<f64>,
    /// Best (smallest) raw output seen by this surrogate.
    y_best: f64,
}

impl GpSurrogate {
    /// Fits kernel hyperparameters by multi-start gradient ascent on the log
    /// marginal likelihood and factors the resulting Gram matrix.
    ///
    /// `inputs` must be normalized to the unit box; duplicated points are
    /// only admissible when the noise is positive.
    pub fn fit<R: Rng>(
        inputs: Vec<DVector<f64>>,
        outputs: Vec<f64>,
        config: &GpConfig,
        rng: &mut R,
    ) -> Result<Self, BayesOptError> {
        let m = inputs.len();
        assert!(m >= 2, "a surrogate needs at least two observations");
        assert!(outputs.len() == m, "inputs/outputs length mismatch");
        let d = inputs[0].len();

        let y_mean = outputs.iter().sum::<f64>() / m as f64;
        let var = outputs.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / m as f64;
        // Constant outputs carry no scale; fall back to unit standardization
        // so z is the zero vector and the posterior mean stays flat.
        let y_scale = if var.sqrt() > 1e-12 * y_mean.abs().max(1.0) {
            var.sqrt()
        } else {
            1.0
        };
        let z = DVector::from_iterator(m, outputs.iter().map(|y| (y - y_mean) / y_scale));

        let fixed_noise_std_units = match config.noise {
            NoiseMode::Fit => None,
            NoiseMode::Fixed(raw_var) => Some(raw_var / (y_scale * y_scale)),
        };

        // θ = [log ℓ_1 … log ℓ_d, log σ_f, (log σ_n)] in standardized units.
        let n_theta = d + 1 + usize::from(fixed_noise_std_units.is_none());
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.n_starts);
        for s in 0..config.n_starts {
            let mut theta = vec![0.0; n_theta];
            let base_l: f64 = match s {
                0 => 0.3,
                1 => 1.0,
                _ => 0.0, // randomized below
            };
            for t in theta.iter_mut().take(d) {
                *t = if s < 2 {
                    base_l.ln()
                } else {
                    rng.gen_range(0.05_f64.ln()..2.0_f64.ln())
                };
            }
            theta[d] = 0.0; // σ_f = 1 on standardized outputs
            if fixed_noise_std_units.is_none() {
                theta[d + 1] = if s == 0 { (1e-2_f64).ln() } else { (1e-3_f64).ln() };
            }
            starts.push(theta);
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in &starts {
            let theta = rprop_ascend(
                &inputs,
                &z,
                start.clone(),
                d,
                fixed_noise_std_units,
                config.max_iters,
            );
            if let Some((lml, _)) = lml_and_grad(&inputs, &z, &theta, d, fixed_noise_std_units) {
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, theta));
                }
            }
        }
        // All starts failing to factor even once is the pathological case
        // (e.g. duplicated inputs with zero noise); fall through with the
        // first start so the jitter ladder below delivers the verdict.
        let theta = best.map(|(_, t)| t).unwrap_or_else(|| starts[0].clone());

        let kernel = MaternKernel {
            lengthscales: DVector::from_iterator(d, theta[..d].iter().map(|t| t.exp())),
            signal_var: (2.0 * theta[d]).exp(),
        };
        let noise_var = fixed_noise_std_units.unwrap_or_else(|| (2.0 * theta[d + 1]).exp());

        let (chol, jitter) = factor_with_ladder(&inputs, &kernel, noise_var)?;
        let alpha = solve_chol(&chol, &z);
        let y_best = outputs.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            inputs,
            y: outputs,
            y_mean,
            y_scale,
            kernel,
            noise_var,
            jitter,
            chol,
            alpha,
            y_best,
        })
    }

    /// Posterior mean and standard deviation of the latent objective at `x`
    /// (normalized units in, raw output units out).
    pub fn posterior(&self, x: &DVector<f64>) -> (f64, f64) {
        let m = self.inputs.len();
        let k_star = DVector::from_fn(m, |i, _| self.kernel.eval(&self.inputs[i], x));
        let mean_z = self.alpha.dot(&k_star);
        let w = self
            .chol
            .solve_lower_triangular(&k_star)
            .expect("factor is triangular with positive diagonal");
        let var_z = (self.kernel.signal_var - w.norm_squared()).max(0.0);
        (
            self.y_mean + self.y_scale * mean_z,
            self.y_scale * var_z.sqrt(),
        )
    }

    /// Absorbs one new observation, extending the Cholesky factor in place.
    ///
    /// Hyperparameters are kept; call [`GpSurrogate::fit`] afresh to re-tune
    /// them.  Falls back to a full refactor (escalating jitter) only when the
    /// extended matrix loses positive definiteness.
    pub fn append(&mut self, x: DVector<f64>, y: f64) -> Result<(), BayesOptError> {
        let m = self.inputs.len();
        let k_new = DVector::from_fn(m, |i, _| self.kernel.eval(&self.inputs[i], &x));
        let k_self = self.kernel.signal_var + self.noise_var + self.jitter;
        let w = self
            .chol
            .solve_lower_triangular(&k_new)
            .expect("factor is triangular with positive diagonal");
        let d2 = k_self - w.norm_squared();

        self.inputs.push(x);
        self.y.push(y);
        self.y_best = self.y_best.min(y);

        if d2 > 1e-12 * k_self {
            let mut chol = DMatrix::zeros(m + 1, m + 1);
            chol.view_mut((0, 0), (m, m)).copy_from(&self.chol);
            chol.view_mut((m, 0), (1, m)).copy_from(&w.transpose());
            chol[(m, m)] = d2.sqrt();
            self.chol = chol;
        } else {
            let (chol, jitter) =
                factor_with_ladder(&self.inputs, &self.kernel, self.noise_var)?;
            self.chol = chol;
            self.jitter = jitter;
        }
        let z = DVector::from_iterator(
            self.inputs.len(),
            self.y.iter().map(|y| (y - self.y_mean) / self.y_scale),
        );
        self.alpha = solve_chol(&self.chol, &z);
        Ok(())
    }

    /// Number of observations conditioning the posterior.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    /// Whether the surrogate holds no observations (never true: fitting
    /// requires two points).
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Best (smallest) raw output among the training data.
    pub fn y_best(&self) -> f64 {
        self.y_best
    }

    /// The fitted kernel.
    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    /// Fitted observation-noise variance in raw output units.
    pub fn noise_var(&self) -> f64 {
        self.noise_var * self.y_scale * self.y_scale
    }

    /// Prior standard deviation in raw output units (the far-field posterior
    /// std).
    pub fn prior_std(&self) -> f64 {
        self.kernel.signal_var.sqrt() * self.y_scale
    }
}

/// Builds the Gram matrix with the given noise, escalating jitter through
/// [`JITTER_LADDER`] until the Cholesky factorization succeeds.
fn factor_with_ladder(
    inputs: &[DVector<f64>],
    kernel: &MaternKernel,
    noise_var: f64,
) -> Result<(DMatrix<f64>, f64), BayesOptError> {
    let m = inputs.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let k = kernel.eval(&inputs[i], &inputs[j]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    for &level in &JITTER_LADDER {
        let jitter = level * kernel.signal_var;
        let mut shifted = gram.clone();
        for i in 0..m {
            shifted[(i, i)] += noise_var + jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
    }
    Err(BayesOptError::IllConditioned {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Two triangular solves: (L Lᵀ)⁻¹ rhs.
fn solve_chol(chol: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut v = chol
        .solve_lower_triangular(rhs)
        .expect("factor is triangular with positive diagonal");
    chol.tr_solve_lower_triangular_mut(&mut v);
    v
}

/// Log marginal likelihood and its gradient with respect to the
/// log-hyperparameters, or None when the Gram matrix fails to factor at the
/// search jitter.
///
/// Gradient identities: dL/dθ = ½·tr((ααᵀ − K⁻¹)·∂K/∂θ) with, for the
/// Matérn-5/2 radial part, ∂k/∂(r²) = −(5σ²/6)(1 + u)e^{−u}.
fn lml_and_grad(
    inputs: &[DVector<f64>],
    z: &DVector<f64>,
    theta: &[f64],
    d: usize,
    fixed_noise: Option<f64>,
    ) -> Option<(f64, Vec<f64>)> {
    let m = inputs.len();
    let kernel = MaternKernel {
        lengthscales: DVector::from_iterator(d, theta[..d].iter().map(|t| t.exp())),
        signal_var: (2.0 * theta[d]).exp(),
    };
    let noise_var = fixed_noise.unwrap_or_else(|| (2.0 * theta[d + 1]).exp());

    // Signal Gram matrix and its factorization at the search jitter.
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let k = kernel.eval(&inputs[i], &inputs[j]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    let search_jitter = 1e-10 * kernel.signal_var;
    let mut shifted = gram.clone();
    for i in 0..m {
        shifted[(i, i)] += noise_var + search_jitter;
    }
    let chol = shifted.cholesky()?;
    let l = chol.l_dirty();

    let alpha = {
        let mut v = z.clone();
        chol.solve_mut(&mut v);
        v
    };
    let log_det_half: f64 = (0..m).map(|i| l[(i, i)].ln()).sum();
    let lml = -0.5 * z.dot(&alpha)
        - log_det_half
        - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    // B = ααᵀ − K⁻¹, shared by every hyperparameter direction.
    let mut k_inv = DMatrix::identity(m, m);
    chol.solve_mut(&mut k_inv);
    let b = &alpha * alpha.transpose() - k_inv;

    let mut grad = vec![0.0; theta.len()];
    // Length-scales: ∂k/∂log ℓ_i = (5σ²/3)(1+u)e^{−u} · Δx_i²/ℓ_i².
    // Precompute C = B ∘ (5σ²/3)(1+u)e^{−u} once, then contract per axis.
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let u = (5.0 * kernel.sq_dist(&inputs[i], &inputs[j])).sqrt();
            let w = (5.0 / 3.0) * kernel.signal_var * (1.0 + u) * (-u).exp();
            c[(i, j)] = b[(i, j)] * w;
            c[(j, i)] = b[(j, i)] * w;
        }
    }
    for axis in 0..d {
        let ell2 = kernel.lengthscales[axis] * kernel.lengthscales[axis];
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let dx = inputs[i][axis] - inputs[j][axis];
                acc += c[(i, j)] * dx * dx;
            }
        }
        grad[axis] = 0.5 * acc / ell2;
    }
    // Signal variance: ∂K/∂log σ_f = 2·K_signal.
    grad[d] = gram.iter().zip(b.iter()).map(|(k, b)| k * b).sum::<f64>();
    if fixed_noise.is_none() {
        // Noise: ∂K/∂log σ_n = 2σ_n²·I.
        grad[d + 1] = noise_var * b.trace();
    }
    Some((lml, grad))
}

/// Sign-adaptive gradient ascent (resilient propagation) on the bounded
/// log-hyperparameters; robust to the likelihood's plateaus and cheap enough
/// to multi-start.
fn rprop_ascend(
    inputs: &[DVector<f64>],
    z: &DVector<f64>,
    mut theta: Vec<f64>,
    d: usize,
    fixed_noise: Option<f64>,
    max_iters: usize,
) -> Vec<f64> {
    let clamp = |theta: &mut Vec<f64>| {
        for (i, t) in theta.iter_mut().enumerate() {
            let (lo, hi) = if i < d {
                LOG_LENGTHSCALE_RANGE
            } else if i == d {
                LOG_SIGNAL_RANGE
            } else {
                LOG_NOISE_RANGE
            };
            *t = t.clamp(lo, hi);
        }
    };
    clamp(&mut theta);

    let mut steps = vec![0.1_f64; theta.len()];
    let mut prev_sign = vec![0.0_f64; theta.len()];
    let mut best_theta = theta.clone();
    let mut best_lml = f64::NEG_INFINITY;

    for _ in 0..max_iters {
        let Some((lml, grad)) = lml_and_grad(inputs, z, &theta, d, fixed_noise) else {
            // Un-factorable region: retreat toward the best point seen.
            theta = best_theta.clone();
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
            prev_sign.iter_mut().for_each(|s| *s = 0.0);
            continue;
        };
        if lml > best_lml {
            best_lml = lml;
            best_theta = theta.clone();
        }
        for i in 0..theta.len() {
            let sign = if grad[i] > 0.0 {
                1.0
            } else if grad[i] < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sign * prev_sign[i] > 0.0 {
                steps[i] = (steps[i] * 1.2).min(0.5);
            } else if sign * prev_sign[i] < 0.0 {
                steps[i] = (steps[i] * 0.5).max(1e-4);
            }
            theta[i] += sign * steps[i];
            prev_sign[i] = sign;
        }
        clamp(&mut theta);
    }
    best_theta
}
