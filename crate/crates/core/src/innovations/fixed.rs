use nalgebra::DMatrix;

use super::{all_zero, collect_lags, InnovationsState};
use crate::covariance::LagCovSet;
use crate::error::Result;
use crate::hilbert::CoordOperator;
use crate::linalg::{spd_inverse, symmetrize};

/// Innovations recursion for a process already projected to `D = lagcovs.dim()`.
///
/// Solves for `V_0, theta_{1,1}, V_1, theta_{2,2}, theta_{2,1}, V_2, ...` with
///
/// ```text
/// theta_{n,n-i} = (C_{n-i} - sum_{j<i} theta_{n,n-j} V_j theta_{i,i-j}^T) V_i^{-1}
/// V_n           = C_0 - sum_{j<n} theta_{n,n-j} V_j theta_{n,n-j}^T
/// ```
///
/// `pivot_tol` is relative: `V_i` counts as singular when its smallest
/// eigenvalue is at most `pivot_tol` times its largest.
pub fn innovations_fixed(lagcovs: &LagCovSet, n_max: usize, pivot_tol: f64) -> Result<InnovationsState> {
    let d = lagcovs.dim();
    let c = collect_lags(lagcovs, n_max)?;
    let dims = vec![d; n_max + 1];
    if all_zero(&c) {
        return Ok(InnovationsState::zero(dims));
    }

    let mut v: Vec<CoordOperator> = vec![c[0].clone()];
    let mut v_inv = vec![spd_inverse(&c[0], pivot_tol, "V_0 (n=1, i=0)")?];
    let mut theta: Vec<Vec<CoordOperator>> = Vec::with_capacity(n_max);

    for n in 1..=n_max {
        // row[k - 1] = theta_{n,k}
        let mut row = vec![DMatrix::zeros(d, d); n];
        for i in 0..n {
            let mut acc = c[n - i].clone();
            for j in 0..i {
                acc -= &row[n - j - 1] * &v[j] * theta[i - 1][i - j - 1].transpose();
            }
            row[n - i - 1] = acc * &v_inv[i];
        }
        let mut vn = c[0].clone();
        for j in 0..n {
            let t = &row[n - j - 1];
            vn -= t * &v[j] * t.transpose();
        }
        let vn = symmetrize(&vn);
        if n < n_max {
            v_inv.push(spd_inverse(&vn, pivot_tol, &format!("V_{n} (n={}, i={n})", n + 1))?);
        }
        v.push(vn);
        theta.push(row);
    }
    Ok(InnovationsState::new(dims, theta, v))
}
