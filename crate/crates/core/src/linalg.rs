//! Small dense helpers shared by the covariance and recursion code.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted nonincreasing.
pub(crate) fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Inverse of a symmetric positive definite matrix through its eigendecomposition.
///
/// Fails when the smallest eigenvalue is not above `pivot_tol` times the largest.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, pivot_tol: f64, step: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max_eig = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    // written so that NaN eigenvalues also count as singular
    let well_conditioned = max_eig > 0.0 && min_eig > pivot_tol * max_eig;
    if !well_conditioned {
        return Err(Error::Singular {
            step: step.to_string(),
            min_eig,
            max_eig,
        });
    }
    let q = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    Ok(symmetrize(&(q * inv_diag * q.transpose())))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Leading `rows x cols` block as an owned matrix.
pub(crate) fn leading_block(m: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((0, 0), (rows, cols)).into_owned()
}
