//! Best linear predictor from the normal equations, independent of the recursion.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::InnovationsState;
use crate::covariance::{assemble_block_covariance, LagCovSet};
use crate::error::{Error, Result};
use crate::hilbert::{CoordOperator, CoordVector};
use crate::linalg::{leading_block, sym_eigen_sorted};

/// Coefficients `beta_1, ..., beta_n` with `Xhat_{n+1} = sum_i beta_i X_{n+1-i}`.
///
/// `dims` holds `d_1, ..., d_n` for the history and `target_dim = d_{n+1}`;
/// `beta_i` is `target_dim x d_{n+1-i}`. Solves `beta Gamma = R` where `Gamma`
/// is the block covariance of `(X_n, ..., X_1)` and `R` stacks
/// `E[X_{n+1} X_{n+1-i}^T]`.
pub fn oracle_best_linear_predictor(
    lagcovs: &LagCovSet,
    dims: &[usize],
    target_dim: usize,
    pivot_tol: f64,
) -> Result<Vec<CoordOperator>> {
    let n = dims.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if target_dim == 0 || target_dim > lagcovs.dim() {
        return Err(Error::Dimension(format!(
            "target dimension {target_dim} outside 1..={}",
            lagcovs.dim()
        )));
    }
    let gamma = assemble_block_covariance(lagcovs, dims)?;
    let (eigs, _) = sym_eigen_sorted(gamma.matrix());
    let (max_eig, min_eig) = (eigs[0], *eigs.last().unwrap());
    // written so that NaN eigenvalues also count as singular
    let well_conditioned = max_eig > 0.0 && min_eig > pivot_tol * max_eig;
    if !well_conditioned {
        if lagcovs.is_zero() {
            return Ok((1..=n).map(|i| DMatrix::zeros(target_dim, dims[n - i])).collect());
        }
        return Err(Error::Singular {
            step: format!("block covariance (n={n})"),
            min_eig,
            max_eig,
        });
    }

    let mut rhs = DMatrix::zeros(gamma.size(), target_dim);
    for i in 1..=n {
        let t = n + 1 - i;
        let block = leading_block(&lagcovs.lag(i as i64)?, target_dim, dims[t - 1]);
        rhs.view_mut((gamma.offset(t), 0), (dims[t - 1], target_dim))
            .copy_from(&block.transpose());
    }
    let chol = Cholesky::new(gamma.matrix().clone()).ok_or_else(|| Error::Singular {
        step: format!("block covariance Cholesky (n={n})"),
        min_eig,
        max_eig,
    })?;
    let beta = chol.solve(&rhs).transpose();
    Ok((1..=n)
        .map(|i| {
            let t = n + 1 - i;
            beta.view((0, gamma.offset(t)), (target_dim, dims[t - 1])).into_owned()
        })
        .collect())
}

/// `sum_i beta_i X_{n+1-i}` using the leading coordinates of each observation.
pub fn oracle_predict(betas: &[CoordOperator], observations: &[CoordVector]) -> Result<CoordVector> {
    let n = observations.len();
    if betas.len() != n {
        return Err(Error::Dimension(format!(
            "{} coefficients for {n} observations",
            betas.len()
        )));
    }
    let Some(first) = betas.first() else {
        return Err(Error::InvalidInput("empty history has no coefficient shape".into()));
    };
    let mut out = DVector::zeros(first.nrows());
    for (i, beta) in betas.iter().enumerate() {
        let x = &observations[n - 1 - i];
        if x.len() < beta.ncols() {
            return Err(Error::Dimension(format!(
                "observation {} has {} coordinates, need {}",
                n - i,
                x.len(),
                beta.ncols()
            )));
        }
        out += beta * x.rows(0, beta.ncols());
    }
    Ok(out)
}

/// Oracle coefficients for every `n = 1..=n_max` under the schedule
/// `dims = d_1, ..., d_{n_max+1}`; entry `n - 1` holds `beta_{n,1..=n}`.
pub fn oracle_coefficient_table(
    lagcovs: &LagCovSet,
    dims: &[usize],
    pivot_tol: f64,
) -> Result<Vec<Vec<CoordOperator>>> {
    (1..dims.len())
        .map(|n| oracle_best_linear_predictor(lagcovs, &dims[..n], dims[n], pivot_tol))
        .collect()
}

/// Largest entrywise residual of `theta_{n,i} = sum_{j=1}^{i} beta_{n,j} theta_{n-j,i-j}`
/// (with `theta_{m,0} = I`) over all rows in `betas`; infinite on shape mismatch.
pub fn beta_theta_link_check(state: &InnovationsState, betas: &[Vec<CoordOperator>]) -> f64 {
    if betas.len() > state.n_max() {
        return f64::INFINITY;
    }
    let theta = |m: usize, k: usize| -> CoordOperator {
        if k == 0 {
            DMatrix::identity(state.dim_at(m + 1), state.dim_at(m + 1))
        } else {
            state.theta(m, k)
        }
    };
    let mut worst = 0.0_f64;
    for (row, beta) in betas.iter().enumerate() {
        let n = row + 1;
        if beta.len() != n {
            return f64::INFINITY;
        }
        for i in 1..=n {
            let lhs = state.theta(n, i);
            let mut rhs = DMatrix::zeros(lhs.nrows(), lhs.ncols());
            for j in 1..=i {
                let (b, t) = (&beta[j - 1], theta(n - j, i - j));
                if b.nrows() != rhs.nrows() || b.ncols() != t.nrows() || t.ncols() != rhs.ncols() {
                    return f64::INFINITY;
                }
                rhs += b * t;
            }
            worst = worst.max((lhs - rhs).amax());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{analytic_lag_covs, Provenance};
    use crate::innovations::{innovations_fixed, DEFAULT_PIVOT_TOL};
    use crate::process::{LinearProcessModel, NoiseSpec};

    fn scalar_set(c: &[f64]) -> LagCovSet {
        let lags = c.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        LagCovSet::new(lags, true, Provenance::Analytic).unwrap()
    }

    #[test]
    fn scalar_ma1_single_step() {
        let beta = oracle_best_linear_predictor(&scalar_set(&[1.25, 0.5]), &[1], 1, DEFAULT_PIVOT_TOL).unwrap();
        assert!((beta[0][(0, 0)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn scalar_ma1_two_steps_by_hand() {
        // [[c0, c1], [c1, c0]] (b1, b2)^T = (c1, 0)^T
        let beta = oracle_best_linear_predictor(&scalar_set(&[1.25, 0.5]), &[1, 1], 1, DEFAULT_PIVOT_TOL).unwrap();
        let det = 1.25 * 1.25 - 0.25;
        assert!((beta[0][(0, 0)] - 1.25 * 0.5 / det).abs() < 1e-14);
        assert!((beta[1][(0, 0)] + 0.25 / det).abs() < 1e-14);
    }

    #[test]
    fn white_noise_betas_vanish() {
        let noise = NoiseSpec::new(vec![1.0, 0.5]).unwrap();
        let set = analytic_lag_covs(&LinearProcessModel::white_noise(noise), 4).unwrap();
        let betas = oracle_best_linear_predictor(&set, &[1, 2, 2], 2, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(betas[0].shape(), (2, 2));
        assert_eq!(betas[2].shape(), (2, 1));
        assert!(betas.iter().all(|b| b.amax() == 0.0));
    }

    #[test]
    fn link_holds_for_scalar_ma1() {
        let set = scalar_set(&[1.25, 0.5]);
        let state = innovations_fixed(&set, 10, DEFAULT_PIVOT_TOL).unwrap();
        let betas = oracle_coefficient_table(&set, &[1; 11], DEFAULT_PIVOT_TOL).unwrap();
        assert!(beta_theta_link_check(&state, &betas) <= 1e-9);
        for n in 1..=10 {
            assert!((state.theta(n, 1) - &betas[n - 1][0]).amax() <= 1e-12);
        }
    }

    #[test]
    fn singular_gamma_is_reported() {
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let set = LagCovSet::new(vec![c0, DMatrix::zeros(2, 2)], true, Provenance::Analytic).unwrap();
        assert!(matches!(
            oracle_best_linear_predictor(&set, &[2], 2, DEFAULT_PIVOT_TOL),
            Err(Error::Singular { .. })
        ));
    }
}
