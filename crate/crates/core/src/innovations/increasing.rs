use super::{all_zero, collect_lags, validate_dims, InnovationsState};
use crate::covariance::LagCovSet;
use crate::error::Result;
use crate::hilbert::CoordOperator;
use crate::linalg::{leading_block, spd_inverse, symmetrize};

/// Innovations recursion on growing subspaces.
///
/// `dims` is the schedule `d_1, ..., d_{n_max+1}`; observation `t` is the
/// leading `d_t` coordinates of the full process described by `lagcovs`.
/// Coefficient blocks are rectangular:
///
/// ```text
/// theta_{n,n-i} = (C_{n-i}[..d_{n+1}, ..d_{i+1}]
///                  - sum_{j<i} theta_{n,n-j} V_j theta_{i,i-j}^T) V_i^{-1}
/// V_n           = C_0[..d_{n+1}, ..d_{n+1}] - sum_{j<n} theta_{n,n-j} V_j theta_{n,n-j}^T
/// ```
pub fn innovations_increasing(lagcovs: &LagCovSet, dims: &[usize], pivot_tol: f64) -> Result<InnovationsState> {
    validate_dims(dims, lagcovs.dim())?;
    let n_max = dims.len() - 1;
    let c = collect_lags(lagcovs, n_max)?;
    if all_zero(&c) {
        return Ok(InnovationsState::zero(dims.to_vec()));
    }
    // d(t) for 1-based time t
    let d = |t: usize| dims[t - 1];

    let mut v: Vec<CoordOperator> = vec![leading_block(&c[0], d(1), d(1))];
    let mut v_inv = vec![spd_inverse(&v[0], pivot_tol, "V_0 (n=1, i=0)")?];
    let mut theta: Vec<Vec<CoordOperator>> = Vec::with_capacity(n_max);

    for n in 1..=n_max {
        let target = d(n + 1);
        let mut row: Vec<CoordOperator> = (1..=n).map(|k| CoordOperator::zeros(target, d(n + 1 - k))).collect();
        for i in 0..n {
            let mut acc = leading_block(&c[n - i], target, d(i + 1));
            for j in 0..i {
                acc -= &row[n - j - 1] * &v[j] * theta[i - 1][i - j - 1].transpose();
            }
            row[n - i - 1] = acc * &v_inv[i];
        }
        let mut vn = leading_block(&c[0], target, target);
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
    Ok(InnovationsState::new(dims.to_vec(), theta, v))
}
