//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYM_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Validates symmetry and positive semidefiniteness, returning the
/// symmetrized matrix with slightly negative eigenvalues clamped to zero.
pub fn clamp_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "covariance must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > SYM_TOL * scale {
        return Err(Error::invalid("covariance is not symmetric"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariance has non-finite entries"));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().any(|&l| l < -PSD_TOL * scale) {
        return Err(Error::invalid("covariance is not positive semidefinite"));
    }
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(symmetrize(a));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(recompose(&eig.eigenvectors, &clamped))
}

fn recompose(vecs: &DMatrix<f64>, vals: &DVector<f64>) -> DMatrix<f64> {
    let scaled = vecs * DMatrix::from_diagonal(vals);
    symmetrize(&(scaled * vecs.transpose()))
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues
/// clamped at zero.
pub fn sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    recompose(&eig.eigenvectors, &roots)
}

/// A factor `F` with `F Fᵀ = A`, used to color standard normal draws.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Ratio of extreme eigenvalues of a symmetric PSD matrix; infinite when
/// singular.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(a));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
