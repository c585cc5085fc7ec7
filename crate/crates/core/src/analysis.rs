//! Prediction-error decompositions, convergence diagnostics and lemma checks.
//!
//! Everything here works in the eigenbasis of the process covariance: the
//! model's lag covariances and simulated paths are rotated by the eigenvectors
//! of `C_X`, so "the first `d` coordinates" means the span of the `d` leading
//! principal directions. Errors are measured in the full ambient space.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{
    analytic_lag_covs, assemble_block_covariance, covariance_eigen, spectral_density, LagCovSet, SpectralDensity,
    DEFAULT_OMEGA_GRID,
};
use crate::error::{Error, Result};
use crate::hilbert::{operator_norm, CoordOperator, CoordVector};
use crate::innovations::{
    forecast, innovations_fixed, innovations_increasing, InnovationsState, Schedule, DEFAULT_PIVOT_TOL,
};
use crate::process::{inverse_representation, simulate, InverseRepresentation, LinearProcessModel, ModelKind};

/// Monte Carlo and numerical settings shared by the studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    pub mc_runs: usize,
    /// Replicate `r` is simulated with seed `seed + r`.
    pub seed: u64,
    pub pivot_tol: f64,
    pub omega_grid: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            mc_runs: 2000,
            seed: 0,
            pivot_tol: DEFAULT_PIVOT_TOL,
            omega_grid: DEFAULT_OMEGA_GRID,
        }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let runs = samples.len();
        let mean = samples.iter().sum::<f64>() / runs as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
        Self {
            mean,
            stderr: (var / runs as f64).sqrt(),
            runs,
        }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Runs `replicate(seed + r)` for every replicate and reduces in replicate order,
/// so the result does not depend on thread scheduling.
fn run_replicates<F>(settings: &StudySettings, width: usize, replicate: F) -> Result<Vec<McEstimate>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    if settings.mc_runs < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 runs".into()));
    }
    let rows: Vec<Vec<f64>> = (0..settings.mc_runs as u64)
        .into_par_iter()
        .map(|r| replicate(settings.seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    Ok((0..width)
        .map(|k| {
            let column: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            McEstimate::from_samples(&column)
        })
        .collect())
}

/// A model seen in the eigenbasis of its covariance operator.
#[derive(Debug, Clone)]
pub struct EigenFrame {
    /// Eigenvalues of `C_X`, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Orthogonal matrix with the eigenvectors as columns.
    pub rotation: DMatrix<f64>,
    /// Lag covariances in rotated coordinates.
    pub lagcovs: LagCovSet,
}

impl EigenFrame {
    pub fn new(model: &LinearProcessModel, max_lag: usize) -> Result<Self> {
        let ambient = analytic_lag_covs(model, max_lag)?;
        let (eigenvalues, rotation) = covariance_eigen(&ambient.lags()[0])?;
        let lagcovs = ambient.rotated(&rotation)?;
        Ok(Self {
            eigenvalues,
            rotation,
            lagcovs,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn rotate(&self, x: &CoordVector) -> CoordVector {
        self.rotation.tr_mul(x)
    }

    /// Operator in the eigenbasis.
    pub fn rotate_operator(&self, op: &CoordOperator) -> CoordOperator {
        self.rotation.transpose() * op * &self.rotation
    }

    /// `sum_{i > d} lambda_i`.
    pub fn tail_sum(&self, d: usize) -> f64 {
        self.eigenvalues.iter().skip(d).fold(0.0, |acc, l| acc + l)
    }
}

/// Squared distance between a full-dimensional point and a prediction living
/// in the leading coordinates.
fn padded_sq_error(target: &CoordVector, prediction: &CoordVector) -> f64 {
    let d = prediction.len();
    (target.rows(0, d) - prediction).norm_squared() + target.rows(d, target.len() - d).norm_squared()
}

/// Lag count large enough for the spectral density of `model` to be accurate
/// (all of them for moving averages), and at least `at_least`.
pub fn spectral_lag_count(model: &LinearProcessModel, at_least: usize) -> usize {
    match model.kind() {
        ModelKind::Far1 { phi } => {
            let norm = operator_norm(phi);
            let needed = if norm <= 0.0 {
                1
            } else {
                ((1e-14_f64).ln() / norm.ln()).ceil().clamp(1.0, 5000.0) as usize
            };
            needed.max(at_least)
        }
        _ => model.ma_order().unwrap_or(0).max(at_least),
    }
}

/// Error of the fixed-`D` predictor after `n` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub dim: usize,
    pub n: usize,
    /// `sum_{i>D} lambda_i`.
    pub tail_sum: f64,
    /// `||V_{D,n}||_N`.
    pub v_nuclear: f64,
    /// `||V_{D,n}||_N^2`, the exponent as displayed in the bound.
    pub v_nuclear_sq: f64,
    /// Monte Carlo `E||X_{n+1} - Xhat_{D,n+1}||^2`.
    pub mc_mse: McEstimate,
    /// `||C_eps||_N = E||eps_0||^2`.
    pub noise_floor: f64,
}

impl ErrorReport {
    /// `mc_mse - tail_sum - ||V||_N`.
    pub fn residual(&self) -> f64 {
        self.mc_mse.mean - self.tail_sum - self.v_nuclear
    }

    /// `mc_mse - tail_sum - ||V||_N^2`.
    pub fn residual_sq(&self) -> f64 {
        self.mc_mse.mean - self.tail_sum - self.v_nuclear_sq
    }
}

fn check_dim(d: usize, ambient: usize) -> Result<()> {
    if d == 0 || d > ambient {
        return Err(Error::Dimension(format!("D = {d} outside 1..={ambient}")));
    }
    Ok(())
}

/// Error decomposition at one `(D, n)` cell.
pub fn error_decomposition(
    model: &LinearProcessModel,
    d: usize,
    n: usize,
    settings: &StudySettings,
) -> Result<ErrorReport> {
    Ok(decomposition_series(model, d, &[n], settings)?.remove(0))
}

/// Decompositions for several `n` at fixed `D`.
///
/// Each replicate simulates one path of length `max(n) + 1` and predicts its
/// last point from the trailing `n` observations, so the cells share random
/// numbers and their differences are estimated with little noise.
pub fn decomposition_series(
    model: &LinearProcessModel,
    d: usize,
    n_list: &[usize],
    settings: &StudySettings,
) -> Result<Vec<ErrorReport>> {
    check_dim(d, model.dim())?;
    let n_max = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("empty n list".into()))?;
    let frame = EigenFrame::new(model, n_max)?;
    let state = innovations_fixed(&frame.lagcovs.projected(d)?, n_max, settings.pivot_tol)?;
    let mse = run_replicates(settings, n_list.len(), |seed| {
        let path = rotated_path(model, &frame, n_max + 1, seed)?;
        trailing_errors(&state, &path.observations, n_list, |target, pred, _| {
            padded_sq_error(target, pred)
        })
    })?;
    let tail_sum = frame.tail_sum(d);
    let noise_floor = model.noise().total_variance();
    Ok(n_list
        .iter()
        .zip(mse)
        .map(|(&n, mc_mse)| {
            let v_nuclear = state.v_nuclear(n);
            ErrorReport {
                dim: d,
                n,
                tail_sum,
                v_nuclear,
                v_nuclear_sq: v_nuclear * v_nuclear,
                mc_mse,
                noise_floor,
            }
        })
        .collect())
}

struct RotatedPath {
    observations: Vec<CoordVector>,
    noise: Vec<CoordVector>,
}

fn rotated_path(model: &LinearProcessModel, frame: &EigenFrame, len: usize, seed: u64) -> Result<RotatedPath> {
    let traj = simulate(model, len, seed)?;
    Ok(RotatedPath {
        observations: traj.observations.iter().map(|x| frame.rotate(x)).collect(),
        noise: traj.noise.iter().map(|e| frame.rotate(e)).collect(),
    })
}

/// For each `n`, predicts the last point of `path` from the `n` points before it
/// and scores it with `score(target, prediction, last_index)`.
fn trailing_errors(
    state: &InnovationsState,
    path: &[CoordVector],
    n_list: &[usize],
    score: impl Fn(&CoordVector, &CoordVector, usize) -> f64,
) -> Result<Vec<f64>> {
    let last = path.len() - 1;
    n_list
        .iter()
        .map(|&n| {
            let f = forecast(state, &path[last - n..last])?;
            Ok(score(&path[last], &f.predictions[n], last))
        })
        .collect()
}

/// `||V_{D,n}||_N` and Monte Carlo errors over `n_list`, for invertible models.
pub fn noise_floor_convergence(
    model: &LinearProcessModel,
    d: usize,
    n_list: &[usize],
    settings: &StudySettings,
) -> Result<Vec<ErrorReport>> {
    inverse_representation(model, 1)?;
    decomposition_series(model, d, n_list, settings)
}

/// Ingredients of the convergence rate for the growing-dimension predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBound {
    pub n: usize,
    pub m_n: usize,
    pub d_n: usize,
    /// `d_{n - m_n}`.
    pub d_lagged: usize,
    /// `sum_{j > m_n} ||pi_j||_L`, including the declared truncation remainder.
    pub pi_tail: f64,
    /// `sum_{j > d_{n - m_n}} lambda_j`.
    pub lambda_tail: f64,
    pub bound: f64,
    /// Infimum spectral eigenvalue of the `d_n`-dimensional projection.
    pub alpha: f64,
    /// `bound / alpha`.
    pub scaled: f64,
}

/// Evaluates `sum_{j>m_n} ||pi_j|| + sum_{j>d_{n-m_n}} lambda_j` at `n`.
///
/// `inv` must be truncated at or beyond `m_n` so its remainder bound applies.
pub fn rate_bound(
    inv: &InverseRepresentation,
    eigenvalues: &[f64],
    schedule: impl Fn(usize) -> usize,
    m_of_n: impl Fn(usize) -> usize,
    n: usize,
    alpha: f64,
) -> Result<RateBound> {
    let m_n = m_of_n(n);
    if m_n >= n {
        return Err(Error::InvalidInput(format!("m_n = {m_n} must be below n = {n}")));
    }
    if m_n > inv.truncation() {
        return Err(Error::InvalidInput(format!(
            "inverse representation truncated at {} < m_n = {m_n}",
            inv.truncation()
        )));
    }
    let d_lagged = schedule(n - m_n);
    let pi_tail = inv.tail_from(m_n);
    let lambda_tail = eigenvalues.iter().skip(d_lagged).fold(0.0, |acc, l| acc + l);
    let bound = pi_tail + lambda_tail;
    Ok(RateBound {
        n,
        m_n,
        d_n: schedule(n),
        d_lagged,
        pi_tail,
        lambda_tail,
        bound,
        alpha,
        scaled: bound / alpha,
    })
}

/// Rate bounds over `n_list` with `alpha` taken from the spectral density of
/// each `d_n`-dimensional projection.
pub fn rate_bound_series(
    model: &LinearProcessModel,
    schedule: &Schedule,
    m_of_n: impl Fn(usize) -> usize,
    n_list: &[usize],
    settings: &StudySettings,
) -> Result<Vec<RateBound>> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let m_max = n_list.iter().map(|&n| m_of_n(n)).max().unwrap_or(0);
    let inv = inverse_representation(model, m_max)?;
    let frame = EigenFrame::new(model, spectral_lag_count(model, 1))?;
    let dims = schedule.dims(n_max.max(1), model.dim())?;
    let d = |n: usize| dims[n - 1];
    n_list
        .iter()
        .map(|&n| {
            let sd = spectral_density(&frame.lagcovs.projected(d(n))?, settings.omega_grid)?;
            rate_bound(&inv, &frame.eigenvalues, d, &m_of_n, n, sd.alpha)
        })
        .collect()
}

/// Least-squares slope of `means` against `bounds` through the origin.
pub fn fit_rate_constant(means: &[f64], bounds: &[f64]) -> f64 {
    let num: f64 = means.iter().zip(bounds).map(|(m, b)| m * b).sum();
    let den: f64 = bounds.iter().map(|b| b * b).sum();
    num / den
}

/// Monte Carlo `E||X_{n+1} - Xhat_{d_{n+1},n+1} - eps_{n+1}||^2` under a schedule.
pub fn excess_error_mc(
    model: &LinearProcessModel,
    schedule: &Schedule,
    n: usize,
    settings: &StudySettings,
) -> Result<McEstimate> {
    Ok(excess_error_series(model, schedule, &[n], settings)?.remove(0))
}

/// [`excess_error_mc`] over several `n`, sharing one path per replicate.
pub fn excess_error_series(
    model: &LinearProcessModel,
    schedule: &Schedule,
    n_list: &[usize],
    settings: &StudySettings,
) -> Result<Vec<McEstimate>> {
    let n_max = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("empty n list".into()))?;
    let frame = EigenFrame::new(model, n_max)?;
    let dims = schedule.dims(n_max + 1, model.dim())?;
    let state = innovations_increasing(&frame.lagcovs, &dims, settings.pivot_tol)?;
    // a trailing window of n points uses the schedule from its own start, so
    // each n gets the prefix of the same recursion
    run_replicates(settings, n_list.len(), |seed| {
        let path = rotated_path(model, &frame, n_max + 1, seed)?;
        trailing_errors(&state, &path.observations, n_list, |target, pred, last| {
            padded_sq_error(&(target - &path.noise[last]), pred)
        })
    })
}

/// `||theta_{n,i} - psi_i||_L` with `psi_i` cut to the same block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDistance {
    pub n: usize,
    pub i: usize,
    pub distance: f64,
}

/// Distances between the recursion coefficients and the moving-average
/// coefficients for each `n` in `n_list` and `i = 1..=min(n, max_i)`.
pub fn theta_convergence(
    model: &LinearProcessModel,
    schedule: &Schedule,
    n_list: &[usize],
    max_i: usize,
    settings: &StudySettings,
) -> Result<Vec<ThetaDistance>> {
    let n_max = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("empty n list".into()))?;
    let frame = EigenFrame::new(model, n_max)?;
    let dims = schedule.dims(n_max + 1, model.dim())?;
    let state = innovations_increasing(&frame.lagcovs, &dims, settings.pivot_tol)?;
    let psis: Vec<CoordOperator> = model
        .ma_coefficients(max_i)
        .iter()
        .map(|p| frame.rotate_operator(p))
        .collect();
    let mut out = Vec::new();
    for &n in n_list {
        for (i, psi) in psis.iter().enumerate().take(n.min(max_i) + 1).skip(1) {
            let theta = state.theta(n, i);
            let psi = psi.view((0, 0), theta.shape()).into_owned();
            out.push(ThetaDistance {
                n,
                i,
                distance: operator_norm(&(theta - psi)),
            });
        }
    }
    Ok(out)
}

/// Outcome of one lemma check; `slack >= 0` exactly when it passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaOutcome {
    pub pass: bool,
    pub slack: f64,
}

impl LemmaOutcome {
    fn from_slack(slack: f64) -> Self {
        Self {
            pass: slack >= 0.0,
            slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub dim: usize,
    pub n: usize,
    pub max_lag: usize,
    /// `|<C_h nu_j, nu_l>| <= sqrt(lambda_j lambda_l) + 1e-8`.
    pub eigen_bound: LemmaOutcome,
    /// Smallest eigenvalue of the `n`-step block covariance `>= 2 pi alpha - 1e-6`.
    pub block_spectrum: LemmaOutcome,
    /// `alpha_D > 0` (beyond round-off).
    pub spectral_positivity: LemmaOutcome,
    pub alpha: f64,
    pub block_min_eigenvalue: f64,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.eigen_bound.pass && self.block_spectrum.pass && self.spectral_positivity.pass
    }
}

/// Runs the three covariance lemmas at dimension `D`, `n` steps and lags `|h| <= max_lag`.
pub fn lemma_checks(
    model: &LinearProcessModel,
    d: usize,
    n: usize,
    max_lag: usize,
    settings: &StudySettings,
) -> Result<LemmaReport> {
    check_dim(d, model.dim())?;
    let frame = EigenFrame::new(model, spectral_lag_count(model, max_lag.max(n)))?;
    let projected = frame.lagcovs.projected(d)?;

    let mut worst = f64::NEG_INFINITY;
    for h in 0..=max_lag {
        let c = projected.lag(h as i64)?;
        for j in 0..d {
            for l in 0..d {
                let excess = c[(l, j)].abs() - (frame.eigenvalues[j] * frame.eigenvalues[l]).sqrt();
                worst = worst.max(excess);
            }
        }
    }
    let eigen_bound = LemmaOutcome::from_slack(1e-8 - worst);

    let sd: SpectralDensity = spectral_density(&projected, settings.omega_grid)?;
    let block_min_eigenvalue = if n == 0 {
        f64::INFINITY
    } else {
        assemble_block_covariance(&projected, &vec![d; n])?.min_eigenvalue()
    };
    let block_spectrum =
        LemmaOutcome::from_slack(block_min_eigenvalue - (2.0 * std::f64::consts::PI * sd.alpha - 1e-6));
    let scale = sd
        .eigenvalues
        .iter()
        .filter_map(|e| e.first().copied())
        .fold(0.0_f64, f64::max);
    let spectral_positivity = LemmaOutcome {
        pass: sd.is_positive(),
        slack: sd.alpha - 1e-10 * scale,
    };
    Ok(LemmaReport {
        dim: d,
        n,
        max_lag,
        eigen_bound,
        block_spectrum,
        spectral_positivity,
        alpha: sd.alpha,
        block_min_eigenvalue,
    })
}

/// Zero-padded copy of `x` in `dim` coordinates.
pub fn pad(x: &CoordVector, dim: usize) -> CoordVector {
    let mut out = DVector::zeros(dim);
    out.rows_mut(0, x.len()).copy_from(x);
    out
}
