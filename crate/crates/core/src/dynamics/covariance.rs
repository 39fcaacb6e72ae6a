//! Covariance-matrix state types.

use nalgebra::{Matrix4, Matrix6};
use serde::{Deserialize, Serialize};

use crate::params::SystemParams;

/// The 6×6 symmetric covariance matrix over
/// (X_c, Y_c, X_m, Y_m, 𝒳_out, 𝒴_out), plus elapsed time in 1/κ.
///
/// Normalization: commutator [X, Y] = 2i, vacuum variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCovariance {
    /// The covariance matrix U.
    pub u: Matrix6<f64>,
    /// Elapsed time.
    pub t: f64,
}

impl ExtendedCovariance {
    /// Largest absolute asymmetry max|U_ij − U_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                worst = worst.max((self.u[(i, j)] - self.u[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces U by its symmetric part (U + Uᵀ)/2.
    pub fn symmetrize(&mut self) {
        self.u = (self.u + self.u.transpose()) * 0.5;
    }

    /// The mechanics⊗output 4×4 reduction V_ij = U_{i+2,j+2}.
    pub fn bipartite(&self) -> BipartiteCovariance {
        BipartiteCovariance {
            v: self.u.fixed_view::<4, 4>(2, 2).into_owned(),
        }
    }

    /// The cavity⊗mechanics 4×4 block (rows/columns 1–4), whose symplectic
    /// spectrum certifies physicality of the propagated state.
    pub fn cavity_mechanics(&self) -> Matrix4<f64> {
        self.u.fixed_view::<4, 4>(0, 0).into_owned()
    }
}

/// The 4×4 covariance over (X_m, Y_m, 𝒳_out, 𝒴_out) used for squeezing
/// metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteCovariance {
    /// The covariance matrix V.
    pub v: Matrix4<f64>,
}

impl BipartiteCovariance {
    /// Largest absolute asymmetry max|V_ij − V_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                worst = worst.max((self.v[(i, j)] - self.v[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Initial condition U(0) = diag(1, 1, 2n₀+1, 2n₀+1, 0, 0): cavity vacuum,
/// mechanics thermal at n₀, output-mode accumulator empty.
pub fn initial_covariance(params: &SystemParams) -> ExtendedCovariance {
    let m = 2.0 * params.n_0 + 1.0;
    ExtendedCovariance {
        u: Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, m, m, 0.0, 0.0)),
        t: 0.0,
    }
}

/// Mechanics⊗output reduction of the extended state: V_ij = U_{i+2,j+2}.
///
/// Free-function form of [`ExtendedCovariance::bipartite`].
pub fn extract_bipartite(u: &ExtendedCovariance) -> BipartiteCovariance {
    u.bipartite()
}

/// Symplectic eigenvalues of a two-mode covariance matrix (normalization
/// [X,Y] = 2i: a physical state has every value ≥ 1).
///
/// Computed as the paired singular values of LᵀΩL where V = LLᵀ; falls back
/// to a symmetric eigen-factorization when V is only semidefinite.
pub fn symplectic_eigenvalues(v: &Matrix4<f64>) -> [f64; 2] {
    // Symplectic form for (X1, Y1, X2, Y2) ordering.
    let mut omega = Matrix4::zeros();
    omega[(0, 1)] = 1.0;
    omega[(1, 0)] = -1.0;
    omega[(2, 3)] = 1.0;
    omega[(3, 2)] = -1.0;

    let l = match v.cholesky() {
        Some(ch) => ch.l(),
        None => {
            // Semidefinite or slightly indefinite from round-off: build a
            // factor from the eigen-decomposition with clamped spectrum.
            let se = v.symmetric_eigen();
            let sqrt_vals = se.eigenvalues.map(|e| e.max(0.0).sqrt());
            se.eigenvectors * Matrix4::from_diagonal(&sqrt_vals)
        }
    };
    let k = l.transpose() * omega * l;
    let svd = k.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Antisymmetric K has paired singular values (ν1, ν1, ν2, ν2).
    [(s[0] + s[1]) * 0.5, (s[2] + s[3]) * 0.5]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn initial_state_shapes() {
        let p = SystemParams::default().with_n_0(0.0);
        let u0 = initial_covariance(&p);
        assert_eq!(u0.u.diagonal().as_slice(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(u0.t, 0.0);

        let p = SystemParams::default().with_n_0(100.0);
        let u0 = initial_covariance(&p);
        assert_eq!(u0.u[(2, 2)], 201.0);
        assert_eq!(u0.u[(3, 3)], 201.0);

        let p = SystemParams::default(); // n_0 = 2.26e8
        let u0 = initial_covariance(&p);
        assert_relative_eq!(u0.u[(2, 2)], 4.52e8 + 1.0, max_relative = 1e-15);
    }

    #[test]
    fn bipartite_extraction_indexing() {
        let mut u = Matrix6::zeros();
        for i in 0..6 {
            u[(i, i)] = (i + 1) as f64;
        }
        let ext = ExtendedCovariance { u, t: 0.0 };
        let v = ext.bipartite().v;
        assert_eq!(v.diagonal().as_slice(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn symmetrization() {
        let mut u = Matrix6::zeros();
        u[(0, 1)] = 2.0;
        let mut ext = ExtendedCovariance { u, t: 0.0 };
        assert_eq!(ext.max_asymmetry(), 2.0);
        ext.symmetrize();
        assert_eq!(ext.max_asymmetry(), 0.0);
        assert_eq!(ext.u[(0, 1)], 1.0);
        assert_eq!(ext.u[(1, 0)], 1.0);
    }

    #[test]
    fn symplectic_spectrum_of_product_states() {
        // vacuum ⊗ thermal(n): eigenvalues 1 and 2n+1
        let v = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 201.0, 201.0));
        let nu = symplectic_eigenvalues(&v);
        assert_relative_eq!(nu[0], 201.0, max_relative = 1e-12);
        assert_relative_eq!(nu[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn symplectic_spectrum_invariant_under_squeezing() {
        // two-mode squeezed vacuum: CM [[c I, s Z],[s Z, c I]] has both
        // symplectic eigenvalues equal to 1 (pure state)
        let (c, s) = (1.25, 0.75);
        let mut v = Matrix4::zeros();
        for i in 0..4 {
            v[(i, i)] = c;
        }
        v[(0, 2)] = s;
        v[(2, 0)] = s;
        v[(1, 3)] = -s;
        v[(3, 1)] = -s;
        let nu = symplectic_eigenvalues(&v);
        assert_relative_eq!(nu[0], 1.0, max_relative = 1e-10);
        assert_relative_eq!(nu[1], 1.0, max_relative = 1e-10);
    }
}
