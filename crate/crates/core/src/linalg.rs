//! Small dense-matrix helpers shared by the filter and the checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is no longer treated as PSD:
/// `lambda_min >= -PSD_TOLERANCE * ||M||_F`.
pub const PSD_TOLERANCE: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    min_eigenvalue(m) >= -rel_tol * m.norm().max(f64::MIN_POSITIVE)
}

/// Fails with an invariant violation if `m` is not symmetric PSD within [`PSD_TOLERANCE`].
pub fn ensure_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    ensure_psd_scaled(m, m.norm(), what)
}

/// As [`ensure_psd`], with the eigenvalue floor taken relative to `scale` instead of `||m||_F`.
/// Use when `m` is a difference of terms of size `scale`.
pub fn ensure_psd_scaled(m: &DMatrix<f64>, scale: f64, what: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Invariant(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-8 * m.norm().max(1.0) {
        return Err(Error::Invariant(format!("{what} is not symmetric (|M - M^T| = {asym:e})")));
    }
    let lmin = min_eigenvalue(m);
    if lmin < -PSD_TOLERANCE * scale.max(m.norm()) {
        return Err(Error::Invariant(format!(
            "{what} is not positive semidefinite (min eigenvalue {lmin:e})"
        )));
    }
    Ok(())
}

/// Sets negative eigenvalues of the symmetric `m` to zero; returns `m` unchanged when it is
/// already PSD.
pub fn clip_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() || min_eigenvalue(&m) >= 0.0 {
        return m;
    }
    let eig = symmetrize(&m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// `lambda_min(upper - lower)`: non-negative iff `lower <= upper` in the PSD order.
pub fn dominance_margin(upper: &DMatrix<f64>, lower: &DMatrix<f64>) -> f64 {
    min_eigenvalue(&(upper - lower))
}

/// Computes `a * b^{-1}` for symmetric positive definite `b` via Cholesky.
pub fn solve_spd_right(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = symmetrize(b)
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    // a b^{-1} = (b^{-1} a^T)^T since b is symmetric
    Ok(chol.solve(&a.transpose()).transpose())
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stack of equally wide blocks.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub fn vstack_vectors(parts: &[DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(p);
        r += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_matches_inverse() {
        let b = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = solve_spd_right(&a, &b, "b").unwrap();
        let expected = &a * b.clone().try_inverse().unwrap();
        assert!((x - expected).norm() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let a = DMatrix::identity(2, 2);
        assert!(matches!(solve_spd_right(&a, &b, "b"), Err(Error::Singular(_))));
    }

    #[test]
    fn block_helpers() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::identity(2, 2);
        let d = block_diag(&[a.clone(), b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(0, 1)], 0.0);
        let s = vstack(&[DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), DMatrix::from_row_slice(1, 2, &[3.0, 4.0])]);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn psd_checks() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(ensure_psd(&m, "m").is_err());
        assert!(ensure_psd(&DMatrix::identity(3, 3), "i").is_ok());
        assert!(dominance_margin(&DMatrix::identity(2, 2), &(DMatrix::identity(2, 2) * 0.5)) > 0.0);
        let tiny = DMatrix::from_element(1, 1, -1e-16);
        assert!(ensure_psd(&tiny, "t").is_err());
        assert!(ensure_psd_scaled(&tiny, 1.0, "t").is_ok());
    }

    #[test]
    fn clipping() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let c = clip_psd(m);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(min_eigenvalue(&c) >= 0.0);
        assert_eq!(clip_psd(DMatrix::identity(2, 2)), DMatrix::identity(2, 2));
    }
}
