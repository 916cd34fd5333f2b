//! Dense complex matrix helpers shared by every module.
//!
//! All operators live on the truncated product space as dense
//! [`OperatorMatrix`] values. Two *roles* exist with different invariants:
//! Hamiltonian-role matrices must be Hermitian ([`hermiticity_error`] ≤ 1e-12
//! relative) and unitary-role matrices must satisfy
//! [`unitarity_error`] < 1e-9. The checks are free functions so call sites
//! can verify whichever role applies.

use ndarray as nd;
use num_complex::Complex64 as C64;

use crate::error::CrError;

/// Dense complex square matrix over the truncated product Hilbert space.
///
/// Entries carry angular frequency (rad/ns) for Hamiltonian-role matrices and
/// are dimensionless for unitaries and generators.
pub type OperatorMatrix = nd::Array2<C64>;

/// Conjugate transpose A†.
pub fn dagger(a: &nd::Array2<C64>) -> nd::Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Commutator [A, B] = AB − BA.
pub fn commutator(a: &nd::Array2<C64>, b: &nd::Array2<C64>) -> nd::Array2<C64> {
    a.dot(b) - b.dot(a)
}

/// Largest entry magnitude, max_jk |A_jk|.
pub fn max_abs(a: &nd::Array2<C64>) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Frobenius norm ‖A‖_F = sqrt(Σ|A_jk|²); an upper bound on the spectral norm.
pub fn frobenius(a: &nd::Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Hermiticity defect, max|A − A†| / max(1, max|A|).
///
/// Hamiltonian-role matrices must keep this ≤ 1e-12.
pub fn hermiticity_error(a: &nd::Array2<C64>) -> f64 {
    let scale = max_abs(a).max(1.0);
    max_abs(&(a - &dagger(a))) / scale
}

/// Unitarity defect ‖U†U − 1‖_max.
///
/// Unitary-role matrices must keep this < 1e-9.
pub fn unitarity_error(u: &nd::Array2<C64>) -> f64 {
    let dim = u.nrows();
    let mut g = dagger(u).dot(u);
    for j in 0..dim {
        g[[j, j]] -= C64::from(1.0);
    }
    max_abs(&g)
}

/// Hermitian eigendecomposition: returns ascending eigenvalues and a matrix
/// whose *columns* are the corresponding orthonormal eigenvectors, so that
/// A = V diag(λ) V†.
///
/// Wraps the LAPACK backend and repairs its layout convention (the backend
/// diagonalizes the transpose of a row-major buffer, so the raw output columns
/// come back conjugated); the reconstruction residual is verified on every
/// call and a residual above 1e-8 (relative) panics, since it indicates a
/// backend convention change rather than bad user input.
pub fn eigh_hermitian(a: &nd::Array2<C64>) -> Result<(nd::Array1<f64>, nd::Array2<C64>), CrError> {
    use ndarray_linalg::{Eigh, UPLO};
    let herm = hermiticity_error(a);
    if herm > 1.0e-12 {
        return Err(CrError::InvalidDevice(format!(
            "eigh_hermitian called on non-Hermitian matrix (defect {herm:.3e})"
        )));
    }
    let (vals, raw) = a
        .eigh(UPLO::Lower)
        .map_err(|e| CrError::InvalidDevice(format!("eigendecomposition failed: {e}")))?;
    let vecs = raw.mapv(|z| z.conj());
    // Verify A v_k = λ_k v_k for all k at once: residual ‖A V − V Λ‖_max.
    let mut av = a.dot(&vecs);
    for (k, &lam) in vals.iter().enumerate() {
        let mut col = av.column_mut(k);
        col -= &vecs.column(k).mapv(|z| z * lam);
    }
    let resid = max_abs(&av) / max_abs(a).max(1.0);
    assert!(
        resid < 1.0e-8,
        "eigendecomposition residual {resid:.3e}: LAPACK layout convention changed"
    );
    Ok((vals, vecs))
}
