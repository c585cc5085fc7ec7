use nalgebra::DMatrix;

use super::{all_zero, InnovationsState, ZERO_LAG_TOL};
use crate::covariance::LagCovSet;
use crate::error::{Error, Result};
use crate::hilbert::{operator_norm, CoordOperator};
use crate::linalg::{spd_inverse, symmetrize};

/// Largest lag `j <= q` whose covariance is nonzero (operator norm above
/// `1e-10`), or 0. `lagcovs` should already be projected.
pub fn detect_fma_order(lagcovs: &LagCovSet, q: usize) -> usize {
    let last = if lagcovs.is_exhaustive() {
        q
    } else {
        q.min(lagcovs.max_lag())
    };
    (1..=last)
        .rev()
        .find(|&j| {
            lagcovs
                .lag(j as i64)
                .map(|c| operator_norm(&c) > ZERO_LAG_TOL)
                .unwrap_or(false)
        })
        .unwrap_or(0)
}

/// Innovations recursion for a projected process whose lags vanish beyond `q_star`.
///
/// Agrees with [`super::innovations_fixed`] but, once `n > q_star`, only the
/// `q_star` leading coefficients of each row are computed and stored:
///
/// ```text
/// theta_{n,k} = (C_k - sum_{j=max(0,n-q*)}^{n-k-1} theta_{n,n-j} V_j theta_{n-k,n-k-j}^T) V_{n-k}^{-1}
/// V_n         = C_0 - sum_{k=1}^{q*} theta_{n,k} V_{n-k} theta_{n,k}^T
/// ```
pub fn innovations_fma(lagcovs: &LagCovSet, q_star: usize, n_max: usize, pivot_tol: f64) -> Result<InnovationsState> {
    let d = lagcovs.dim();
    let checked = if lagcovs.is_exhaustive() {
        n_max
    } else {
        n_max.min(lagcovs.max_lag())
    };
    for h in (q_star + 1)..=checked {
        let norm = operator_norm(&lagcovs.lag(h as i64)?);
        if norm > ZERO_LAG_TOL {
            return Err(Error::InvalidInput(format!(
                "lag {h} covariance has norm {norm:e} beyond order {q_star}"
            )));
        }
    }
    let top = q_star.min(n_max);
    let c: Vec<CoordOperator> = (0..=top).map(|h| lagcovs.lag(h as i64)).collect::<Result<_>>()?;
    let dims = vec![d; n_max + 1];
    if all_zero(&c) {
        return Ok(InnovationsState::zero(dims));
    }
    let lag = |h: usize| -> CoordOperator {
        if h <= top {
            c[h].clone()
        } else {
            DMatrix::zeros(d, d)
        }
    };

    let mut v: Vec<CoordOperator> = vec![c[0].clone()];
    let mut v_inv = vec![spd_inverse(&c[0], pivot_tol, "V_0 (n=1, i=0)")?];
    let mut theta: Vec<Vec<CoordOperator>> = Vec::with_capacity(n_max);

    for n in 1..=n_max {
        let width = n.min(q_star);
        let mut row = vec![DMatrix::zeros(d, d); width];
        let first = n.saturating_sub(q_star);
        for k in (1..=width).rev() {
            let mut acc = lag(k);
            for j in first..(n - k) {
                // theta_{n,n-j} with n - j > k is already in `row`; j < n - k keeps the
                // second index of theta_{n-k,n-k-j} positive
                let Some(back) = theta[n - k - 1].get(n - k - j - 1) else {
                    continue;
                };
                acc -= &row[n - j - 1] * &v[j] * back.transpose();
            }
            row[k - 1] = acc * &v_inv[n - k];
        }
        let mut vn = c[0].clone();
        for (k, t) in row.iter().enumerate() {
            vn -= t * &v[n - k - 1] * t.transpose();
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
