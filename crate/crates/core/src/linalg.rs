//! Dense symmetric matrix helpers built on nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LabError, Result};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const MIN_EIGENVALUE: f64 = 1e-12;

fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LabError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LabError::NotSpd("non-finite entry".into()));
    }
    Ok(())
}

/// Symmetric square root of a symmetric positive definite matrix, by
/// eigendecomposition.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    let defect = symmetry_defect(m);
    if defect > SYMMETRY_TOL {
        return Err(LabError::NotSpd(format!("asymmetry {defect:.3e}")));
    }
    let eig = SymmetricEigen::new(m.clone());
    if let Some((idx, &lambda)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        if lambda <= MIN_EIGENVALUE {
            return Err(LabError::NotSpd(format!(
                "eigenvalue #{idx} = {lambda:.6e} is not above {MIN_EIGENVALUE:e}"
            )));
        }
    }
    Ok(recompose(&eig, |l| l.sqrt()))
}

/// Square root of a positive semidefinite matrix; eigenvalues in
/// `(-1e-10·scale, 0]` are clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    let scale = m.amax().max(1.0);
    let defect = symmetry_defect(m);
    if defect > SYMMETRY_TOL * scale {
        return Err(LabError::NotSpd(format!("asymmetry {defect:.3e}")));
    }
    let eig = SymmetricEigen::new(m.clone());
    if let Some(&lambda) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if lambda < -1e-10 * scale {
            return Err(LabError::NotSpd(format!(
                "negative eigenvalue {lambda:.6e}"
            )));
        }
    }
    Ok(recompose(&eig, |l| l.max(0.0).sqrt()))
}

fn recompose(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let diag = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let s = q * DMatrix::from_diagonal(&diag) * q.transpose();
    // symmetrise away rounding
    (&s + s.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_operator_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Writes `σ = √(2a)` for a row-major `d×d` matrix `a` into `sigma`.
///
/// Scalar and diagonal inputs avoid the eigensolver.
pub fn diffusion_to_sigma(a: &[f64], d: usize, sigma: &mut [f64]) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    if d == 1 {
        let v = a[0];
        if !(v > MIN_EIGENVALUE) || !v.is_finite() {
            return Err(LabError::NotSpd(format!("eigenvalue #0 = {v:.6e}")));
        }
        sigma[0] = (2.0 * v).sqrt();
        return Ok(());
    }
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || a[i * d + j] == 0.0));
    if diagonal {
        for i in 0..d {
            for j in 0..d {
                sigma[i * d + j] = 0.0;
            }
            let v = a[i * d + i];
            if !(v > MIN_EIGENVALUE) || !v.is_finite() {
                return Err(LabError::NotSpd(format!("eigenvalue #{i} = {v:.6e}")));
            }
            sigma[i * d + i] = (2.0 * v).sqrt();
        }
        return Ok(());
    }
    let m = DMatrix::from_row_slice(d, d, a) * 2.0;
    let s = sqrt_spd(&m)?;
    for i in 0..d {
        for j in 0..d {
            sigma[i * d + j] = s[(i, j)];
        }
    }
    Ok(())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
