//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Absolute tolerance used for symmetry and PSD validation of inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Smallest eigenvalue of a symmetric matrix. Returns 0 for an empty matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root `S` with `S S = m` of a PSD matrix. Eigenvalues in
/// `[-SYMMETRY_TOL, 0)` are treated as zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    let v = &eig.eigenvectors;
    let mut s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut s);
    s
}

/// Checks that `m` is square, symmetric within [`SYMMETRY_TOL`] and has no
/// eigenvalue below `-SYMMETRY_TOL`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, SYMMETRY_TOL) && min_eigenvalue(m) >= -SYMMETRY_TOL
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    libm::sqrt(m.iter().map(|x| x * x).sum())
}

pub fn euclidean_norm(v: &DVector<f64>) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - &m).abs().max() < 1e-12);
    }

    #[test]
    fn sqrt_of_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - &m).abs().max() < 1e-12);
        assert!(psd_sqrt(&DMatrix::zeros(3, 3)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn psd_detection() {
        assert!(is_psd(&DMatrix::identity(3, 3)));
        assert!(!is_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])));
        assert!(!is_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])));
    }
}
