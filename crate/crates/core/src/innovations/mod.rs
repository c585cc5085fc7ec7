//! One-step best linear prediction of projected functional processes.
//!
//! The recursions return an [`InnovationsState`]: the coefficient operators
//! `theta_{n,k}` (acting on the innovation `X_{n+1-k} - Xhat_{n+1-k}`) and the
//! innovation covariances `V_n = E[(X_{n+1} - Xhat_{n+1})(...)^T]`, for
//! `n = 0..=n_max`. Observation `t` (1-based) lives in the leading `d_t`
//! coordinates, so `theta_{n,k}` is `d_{n+1} x d_{n+1-k}` and `V_n` is
//! `d_{n+1} x d_{n+1}`. With a constant dimension this is the fixed-`D` case.

mod fixed;
mod fma;
mod increasing;
mod oracle;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use fixed::innovations_fixed;
pub use fma::{detect_fma_order, innovations_fma};
pub use increasing::innovations_increasing;
pub use oracle::{beta_theta_link_check, oracle_best_linear_predictor, oracle_coefficient_table, oracle_predict};

use crate::covariance::LagCovSet;
use crate::error::{Error, Result};
use crate::hilbert::{nuclear_norm, operator_norm, CoordOperator, CoordVector};

/// Default relative pivot tolerance for inverting innovation covariances.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;

/// Threshold below which a projected lag covariance counts as zero.
pub const ZERO_LAG_TOL: f64 = 1e-10;

/// Coefficients and innovation covariances of the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationsState {
    /// `d_1, ..., d_{n_max+1}`.
    dims: Vec<usize>,
    /// `theta[n-1][k-1] = theta_{n,k}`; entries past the stored row length are zero.
    theta: Vec<Vec<CoordOperator>>,
    /// `V_0, ..., V_{n_max}`.
    v: Vec<CoordOperator>,
}

impl InnovationsState {
    pub(crate) fn new(dims: Vec<usize>, theta: Vec<Vec<CoordOperator>>, v: Vec<CoordOperator>) -> Self {
        debug_assert_eq!(dims.len(), v.len());
        debug_assert_eq!(theta.len() + 1, v.len());
        Self { dims, theta, v }
    }

    /// State of a process whose lag covariances all vanish.
    pub(crate) fn zero(dims: Vec<usize>) -> Self {
        let v = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        let theta = vec![Vec::new(); dims.len() - 1];
        Self { dims, theta, v }
    }

    pub fn n_max(&self) -> usize {
        self.theta.len()
    }

    /// Per-time dimensions `d_1, ..., d_{n_max+1}`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `d_t` for 1-based time `t`.
    pub fn dim_at(&self, t: usize) -> usize {
        self.dims[t - 1]
    }

    /// Whether every time uses the same dimension.
    pub fn is_fixed_dim(&self) -> bool {
        self.dims.windows(2).all(|w| w[0] == w[1])
    }

    /// The explicitly stored coefficients of row `n`, `theta_{n,1}, theta_{n,2}, ...`.
    pub fn stored_row(&self, n: usize) -> &[CoordOperator] {
        &self.theta[n - 1]
    }

    /// `theta_{n,k}` for `1 <= k <= n <= n_max`, zero when not stored.
    pub fn theta(&self, n: usize, k: usize) -> CoordOperator {
        assert!(1 <= k && k <= n && n <= self.n_max(), "theta({n},{k}) out of range");
        self.theta[n - 1]
            .get(k - 1)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.dims[n], self.dims[n - k]))
    }

    /// `V_n` for `0 <= n <= n_max`.
    pub fn v(&self, n: usize) -> &CoordOperator {
        &self.v[n]
    }

    pub fn v_nuclear(&self, n: usize) -> f64 {
        nuclear_norm(&self.v[n])
    }

    /// Largest entrywise difference of all `theta` and `V`, or `None` if the
    /// two states have different shapes.
    pub fn max_difference(&self, other: &Self) -> Option<f64> {
        if self.dims != other.dims {
            return None;
        }
        let mut worst = 0.0_f64;
        for n in 1..=self.n_max() {
            for k in 1..=n {
                worst = worst.max((self.theta(n, k) - other.theta(n, k)).amax());
            }
        }
        for (a, b) in self.v.iter().zip(&other.v) {
            worst = worst.max((a - b).amax());
        }
        Some(worst)
    }
}

/// Predictors and innovations produced by running a state over data.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// `Xhat_1, ..., Xhat_{n+1}`.
    pub predictions: Vec<CoordVector>,
    /// `X_t - Xhat_t` for `t = 1..=n`.
    pub innovations: Vec<CoordVector>,
}

/// Runs the predictor over `observations` (`X_1, ..., X_n`, `n <= n_max`).
///
/// Observations may carry more coordinates than the schedule asks for; only
/// the leading `d_t` are used.
pub fn forecast(state: &InnovationsState, observations: &[CoordVector]) -> Result<Forecast> {
    let n = observations.len();
    if n > state.n_max() {
        return Err(Error::InvalidInput(format!(
            "{n} observations but the recursion only reaches n_max = {}",
            state.n_max()
        )));
    }
    let mut predictions = Vec::with_capacity(n + 1);
    let mut innovations: Vec<CoordVector> = Vec::with_capacity(n);
    predictions.push(DVector::zeros(state.dim_at(1)));
    for (idx, x) in observations.iter().enumerate() {
        let t = idx + 1;
        let d = state.dim_at(t);
        if x.len() < d {
            return Err(Error::Dimension(format!(
                "observation {t} has {} coordinates, need {d}",
                x.len()
            )));
        }
        innovations.push(x.rows(0, d) - &predictions[idx]);
        let mut next = DVector::zeros(state.dim_at(t + 1));
        for (k, theta) in state.stored_row(t).iter().enumerate() {
            next += theta * &innovations[t - 1 - k];
        }
        predictions.push(next);
    }
    Ok(Forecast {
        predictions,
        innovations,
    })
}

/// `Xhat_{n+1}` from `X_1, ..., X_n`.
pub fn predict(state: &InnovationsState, observations: &[CoordVector]) -> Result<CoordVector> {
    let mut f = forecast(state, observations)?;
    Ok(f.predictions.pop().expect("forecast always holds Xhat_1"))
}

/// Lags `0..=n_max` as owned matrices, failing if the set stops short.
pub(crate) fn collect_lags(lagcovs: &LagCovSet, n_max: usize) -> Result<Vec<CoordOperator>> {
    (0..=n_max).map(|h| lagcovs.lag(h as i64)).collect()
}

pub(crate) fn all_zero(lags: &[CoordOperator]) -> bool {
    lags.iter().all(|c| operator_norm(c) == 0.0)
}

/// Dimension schedule `n -> d_n` from a small whitelist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    /// `d_n = D`.
    Constant(usize),
    /// `d_n = min(cap, 1 + floor(log2 n))`.
    FloorLog { cap: usize },
    /// `d_n = min(cap, max(1, floor(sqrt n)))`.
    FloorSqrt { cap: usize },
    /// `d_1, d_2, ...` spelled out.
    List(Vec<usize>),
}

impl Schedule {
    /// `d_n` for `n >= 1`; `None` past the end of an explicit list.
    pub fn dim_at(&self, n: usize) -> Option<usize> {
        assert!(n >= 1, "schedules start at n = 1");
        match self {
            Schedule::Constant(d) => Some(*d),
            Schedule::FloorLog { cap } => Some((*cap).min(1 + n.ilog2() as usize)),
            Schedule::FloorSqrt { cap } => Some((*cap).min(n.isqrt().max(1))),
            Schedule::List(dims) => dims.get(n - 1).copied(),
        }
    }

    /// `d_1, ..., d_count`, checked to be positive, nondecreasing and at most `max_dim`.
    pub fn dims(&self, count: usize, max_dim: usize) -> Result<Vec<usize>> {
        let dims = (1..=count)
            .map(|n| {
                self.dim_at(n)
                    .ok_or_else(|| Error::InvalidInput(format!("schedule list has fewer than {count} entries")))
            })
            .collect::<Result<Vec<_>>>()?;
        validate_dims(&dims, max_dim)?;
        Ok(dims)
    }

    /// Largest dimension the schedule reaches over `1..=count`.
    pub fn max_dim(&self, count: usize) -> Option<usize> {
        (1..=count).filter_map(|n| self.dim_at(n)).max()
    }
}

pub(crate) fn validate_dims(dims: &[usize], max_dim: usize) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::InvalidInput("empty dimension schedule".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > max_dim) {
        return Err(Error::Dimension(format!("schedule value {d} outside 1..={max_dim}")));
    }
    if dims.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("schedule must be nondecreasing".into()));
    }
    Ok(())
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(d) => write!(f, "constant({d})"),
            Schedule::FloorLog { cap } => write!(f, "floor-log({cap})"),
            Schedule::FloorSqrt { cap } => write!(f, "floor-sqrt({cap})"),
            Schedule::List(dims) => {
                let items: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
                write!(f, "list({})", items.join(","))
            }
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// Parses `constant(D)`, `floor-log(cap)`, `floor-sqrt(cap)` or `list(d1,d2,...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Parse(format!("schedule `{s}`: expected name(args)")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Parse(format!("schedule `{s}`: missing `)`")))?;
        let values = args
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("schedule `{s}`: `{}` is not a positive integer", a.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.contains(&0) {
            return Err(Error::Parse(format!("schedule `{s}`: values must be positive")));
        }
        let single = || -> Result<usize> {
            match values.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::Parse(format!("schedule `{s}`: expected one argument"))),
            }
        };
        match name.trim() {
            "constant" => Ok(Schedule::Constant(single()?)),
            "floor-log" => Ok(Schedule::FloorLog { cap: single()? }),
            "floor-sqrt" => Ok(Schedule::FloorSqrt { cap: single()? }),
            "list" => Ok(Schedule::List(values)),
            other => Err(Error::Parse(format!(
                "unknown schedule `{other}` (expected constant, floor-log, floor-sqrt or list)"
            ))),
        }
    }
}
