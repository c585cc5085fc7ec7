//! Lagged covariance operators, block covariances and spectral density matrices.
//!
//! Orientation: the coordinate matrix `C_h` of the lag-`h` covariance has entry
//! `(l, j) = E[<X_0, nu_j> <X_h, nu_l>]`, i.e. `C_h = E[X_h X_0^T]` for
//! coordinate vectors. Negative lags are transposes, `C_{-h} = C_h^T`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hilbert::{nuclear_norm, operator_norm, BasisKind, CoordOperator, CoordVector, OrthonormalBasis};
use crate::linalg::{leading_block, max_abs, min_eigenvalue, sym_eigen_sorted, symmetrize};
use crate::process::{LinearProcessModel, ModelKind};

/// Iteration cap for the FAR(1) covariance fixed point.
pub const FAR_MAX_ITERATIONS: usize = 100_000;
/// Convergence tolerance (nuclear norm of the update) for the FAR(1) fixed point.
pub const FAR_TOL: f64 = 1e-12;
/// Default number of frequencies on `(-pi, pi]`.
pub const DEFAULT_OMEGA_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Empirical,
}

/// The family `{C_h : h = 0..=H}` in basis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCovSet {
    lags: Vec<CoordOperator>,
    /// All lags beyond `H` vanish exactly (finite-order moving averages).
    exhaustive: bool,
    provenance: Provenance,
}

impl LagCovSet {
    pub fn new(lags: Vec<CoordOperator>, exhaustive: bool, provenance: Provenance) -> Result<Self> {
        let d = lags
            .first()
            .map(|c| c.nrows())
            .ok_or_else(|| Error::InvalidInput("lag covariance set needs lag 0".into()))?;
        for (h, c) in lags.iter().enumerate() {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::Dimension(format!(
                    "lag {h} covariance is {}x{}, expected {d}x{d}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        let c0 = &lags[0];
        if max_abs(&(c0 - c0.transpose())) > 1e-10 * max_abs(c0).max(1.0) {
            return Err(Error::InvalidInput("lag-0 covariance is not symmetric".into()));
        }
        let min = min_eigenvalue(c0);
        if min < -1e-10 * max_abs(c0).max(1.0) {
            return Err(Error::NotPsd(min));
        }
        Ok(Self {
            lags,
            exhaustive,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn lags(&self) -> &[CoordOperator] {
        &self.lags
    }

    /// `C_h` for any integer lag; beyond `H` only when the set is exhaustive.
    pub fn lag(&self, h: i64) -> Result<CoordOperator> {
        let abs = h.unsigned_abs() as usize;
        let c = match self.lags.get(abs) {
            Some(c) => c.clone(),
            None if self.exhaustive => DMatrix::zeros(self.dim(), self.dim()),
            None => {
                return Err(Error::LagOutOfRange {
                    lag: h,
                    max_lag: self.max_lag(),
                })
            }
        };
        Ok(if h < 0 { c.transpose() } else { c })
    }

    /// Whether lags up to `h` are available.
    pub fn covers(&self, h: usize) -> bool {
        self.exhaustive || h <= self.max_lag()
    }

    /// Same lags expressed in rotated coordinates `x' = R^T x`.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        if rotation.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "rotation has {} rows for dimension {}",
                rotation.nrows(),
                self.dim()
            )));
        }
        let rt = rotation.transpose();
        let lags = self.lags.iter().map(|c| &rt * c * rotation).collect::<Vec<_>>();
        let mut lags = lags;
        lags[0] = symmetrize(&lags[0]);
        Ok(Self {
            lags,
            exhaustive: self.exhaustive,
            provenance: self.provenance,
        })
    }

    /// Leading `d x d` blocks, i.e. the covariances of the projected process.
    pub fn projected(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.dim() {
            return Err(Error::Dimension(format!(
                "projection dimension {d} outside 1..={}",
                self.dim()
            )));
        }
        Ok(Self {
            lags: self.lags.iter().map(|c| leading_block(c, d, d)).collect(),
            exhaustive: self.exhaustive,
            provenance: self.provenance,
        })
    }

    /// All lags are exactly zero.
    pub fn is_zero(&self) -> bool {
        self.lags.iter().all(|c| c.iter().all(|v| *v == 0.0))
    }
}

/// `sum_{j=0}^{J-h} psi_{j+h} C_eps psi_j^T` with `psi_0 = I`.
fn ma_lag_cov(psis: &[CoordOperator], c_eps: &CoordOperator, h: usize) -> CoordOperator {
    let d = c_eps.nrows();
    let q = psis.len() - 1;
    let mut out = DMatrix::zeros(d, d);
    if h > q {
        return out;
    }
    for j in 0..=(q - h) {
        out += &psis[j + h] * c_eps * psis[j].transpose();
    }
    out
}

/// Analytic `C_h` of a finite-order moving average (FMA or truncated MA(∞)).
pub fn analytic_lag_cov_fma(model: &LinearProcessModel, h: usize) -> Result<CoordOperator> {
    let q = match model.kind() {
        ModelKind::Fma { gammas } => gammas.len(),
        ModelKind::GeneralMa { psis } => psis.len(),
        ModelKind::Far1 { .. } => return Err(Error::InvalidInput("model is not a moving average".into())),
    };
    let psis = model.ma_coefficients(q);
    Ok(ma_lag_cov(&psis, &model.noise().covariance(), h))
}

/// Stationary covariance of FAR(1): fixed point of `C = Phi C Phi^T + C_eps`.
pub fn far1_covariance(phi: &CoordOperator, c_eps: &CoordOperator, tol: f64) -> Result<CoordOperator> {
    let norm = operator_norm(phi);
    if norm >= 1.0 {
        return Err(Error::NotStationary { norm });
    }
    let mut c = c_eps.clone();
    let mut change = f64::INFINITY;
    for _ in 0..FAR_MAX_ITERATIONS {
        let next = symmetrize(&(phi * &c * phi.transpose() + c_eps));
        change = nuclear_norm(&(&next - &c));
        c = next;
        if change < tol {
            return Ok(c);
        }
    }
    Err(Error::NonConvergence {
        iterations: FAR_MAX_ITERATIONS,
        change,
    })
}

/// Analytic `C_h = Phi^h C_X` of a FAR(1) process.
pub fn analytic_lag_cov_far1(model: &LinearProcessModel, h: usize, tol: f64) -> Result<CoordOperator> {
    let ModelKind::Far1 { phi } = model.kind() else {
        return Err(Error::InvalidInput("model is not FAR(1)".into()));
    };
    let mut c = far1_covariance(phi, &model.noise().covariance(), tol)?;
    for _ in 0..h {
        c = phi * c;
    }
    Ok(c)
}

/// Analytic lags `0..=max_lag` of any supported model.
pub fn analytic_lag_covs(model: &LinearProcessModel, max_lag: usize) -> Result<LagCovSet> {
    match model.kind() {
        ModelKind::Far1 { phi } => {
            let mut c = far1_covariance(phi, &model.noise().covariance(), FAR_TOL)?;
            let mut lags = Vec::with_capacity(max_lag + 1);
            for _ in 0..=max_lag {
                let next = phi * &c;
                lags.push(std::mem::replace(&mut c, next));
            }
            LagCovSet::new(lags, false, Provenance::Analytic)
        }
        _ => {
            let q = model.ma_order().unwrap_or(0);
            let psis = model.ma_coefficients(q);
            let c_eps = model.noise().covariance();
            let lags = (0..=max_lag).map(|h| ma_lag_cov(&psis, &c_eps, h)).collect();
            LagCovSet::new(lags, max_lag >= q, Provenance::Analytic)
        }
    }
}

/// Sample lag-`h` covariance with divisor `n`, centred at the sample mean.
pub fn empirical_lag_cov(trajectory: &[CoordVector], h: usize) -> Result<CoordOperator> {
    let n = trajectory.len();
    if h >= n {
        return Err(Error::InvalidInput(format!("lag {h} needs more than {n} observations")));
    }
    let d = trajectory[0].len();
    if trajectory.iter().any(|x| x.len() != d) {
        return Err(Error::Dimension("trajectory rows differ in length".into()));
    }
    let mean = trajectory.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n as f64;
    let mut out = DMatrix::zeros(d, d);
    for t in 0..n - h {
        out += (&trajectory[t + h] - &mean) * (&trajectory[t] - &mean).transpose();
    }
    Ok(out / n as f64)
}

pub fn empirical_lag_covs(trajectory: &[CoordVector], max_lag: usize) -> Result<LagCovSet> {
    let lags = (0..=max_lag)
        .map(|h| empirical_lag_cov(trajectory, h))
        .collect::<Result<Vec<_>>>()?;
    let mut lags = lags;
    lags[0] = symmetrize(&lags[0]);
    LagCovSet::new(lags, false, Provenance::Empirical)
}

/// Leading `d_out x d_in` block of `C_h`, the coordinate form of `P C_h P`.
pub fn projected_lag_cov(full: &LagCovSet, d_out: usize, d_in: usize, h: i64) -> Result<CoordOperator> {
    if d_out > full.dim() || d_in > full.dim() {
        return Err(Error::Dimension(format!(
            "projection {d_out}x{d_in} exceeds dimension {}",
            full.dim()
        )));
    }
    Ok(leading_block(&full.lag(h)?, d_out, d_in))
}

/// Covariance of the stacked vector `(X_{d_n,n}, ..., X_{d_1,1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    /// Chronological per-time dimensions `d_1, ..., d_n`.
    dims: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl BlockCovariance {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    /// `k_n = sum d_i`.
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row/column offset of time `t` (1-based) in the reversed stacking.
    pub fn offset(&self, t: usize) -> usize {
        self.dims[t..].iter().sum()
    }

    /// Block `E[X_s X_t^T]` for 1-based times `s`, `t`.
    pub fn block(&self, s: usize, t: usize) -> DMatrix<f64> {
        let (ds, dt) = (self.dims[s - 1], self.dims[t - 1]);
        self.matrix
            .view((self.offset(s), self.offset(t)), (ds, dt))
            .into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

/// Assembles `Gamma_{(d_n),n}` from lag covariances, ordered `X_n` first.
pub fn assemble_block_covariance(lagcovs: &LagCovSet, dims: &[usize]) -> Result<BlockCovariance> {
    if dims.is_empty() {
        return Err(Error::InvalidInput("block covariance needs at least one time".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > lagcovs.dim()) {
        return Err(Error::Dimension(format!(
            "block dimension {d} outside 1..={}",
            lagcovs.dim()
        )));
    }
    let n = dims.len();
    let size: usize = dims.iter().sum();
    let mut matrix = DMatrix::zeros(size, size);
    let offset = |t: usize| -> usize { dims[t..].iter().sum() };
    for s in 1..=n {
        for t in 1..=s {
            let block = projected_lag_cov(lagcovs, dims[s - 1], dims[t - 1], (s - t) as i64)?;
            let (rs, ct) = (offset(s), offset(t));
            matrix
                .view_mut((rs, ct), (block.nrows(), block.ncols()))
                .copy_from(&block);
            if s != t {
                matrix
                    .view_mut((ct, rs), (block.ncols(), block.nrows()))
                    .copy_from(&block.transpose());
            }
        }
    }
    Ok(BlockCovariance {
        dims: dims.to_vec(),
        matrix: symmetrize(&matrix),
    })
}

/// Uniform grid `omega_k = -pi + 2 pi (k + 1) / m`, `k = 0..m`, on `(-pi, pi]`.
pub fn omega_grid(m: usize) -> Vec<f64> {
    (0..m).map(|k| -PI + 2.0 * PI * (k + 1) as f64 / m as f64).collect()
}

/// `(1/2pi) (C_0 + sum_{h>=1} e^{-ih w} C_h + e^{ih w} C_h^T)`.
pub fn spectral_matrix(lagcovs: &LagCovSet, omega: f64) -> DMatrix<Complex<f64>> {
    let d = lagcovs.dim();
    let mut f: DMatrix<Complex<f64>> = lagcovs.lags()[0].map(|v| Complex::new(v, 0.0));
    for (h, c) in lagcovs.lags().iter().enumerate().skip(1) {
        let phase = Complex::from_polar(1.0, -(h as f64) * omega);
        for l in 0..d {
            for j in 0..d {
                f[(l, j)] += phase * c[(l, j)] + phase.conj() * c[(j, l)];
            }
        }
    }
    f / Complex::new(2.0 * PI, 0.0)
}

/// Real eigenvalues of a Hermitian matrix, sorted nonincreasing.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex<f64>>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * Complex::new(0.5, 0.0);
    let mut vals: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Spectral density matrices on a frequency grid and the infimum eigenvalue.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    pub omegas: Vec<f64>,
    pub matrices: Vec<DMatrix<Complex<f64>>>,
    /// Per-frequency eigenvalues, nonincreasing.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Smallest eigenvalue over the refined grid.
    pub alpha: f64,
    /// The lag set was not exhaustive, so the series was cut at its last lag.
    pub truncated: bool,
}

impl SpectralDensity {
    /// `alpha` is positive beyond round-off, relative to the largest spectral value.
    pub fn is_positive(&self) -> bool {
        let scale = self
            .eigenvalues
            .iter()
            .filter_map(|e| e.first().copied())
            .fold(0.0_f64, f64::max);
        self.alpha > 1e-10 * scale.max(f64::MIN_POSITIVE)
    }
}

fn grid_min_eigenvalue(lagcovs: &LagCovSet, omegas: &[f64]) -> f64 {
    omegas
        .iter()
        .map(|&w| {
            hermitian_eigenvalues(&spectral_matrix(lagcovs, w))
                .last()
                .copied()
                .unwrap_or(f64::INFINITY)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates the spectral density on `grid_size` frequencies.
///
/// `alpha` starts as the grid minimum and the grid is doubled until the
/// minimum moves by less than `1e-8` (at most six doublings).
pub fn spectral_density(lagcovs: &LagCovSet, grid_size: usize) -> Result<SpectralDensity> {
    if grid_size == 0 {
        return Err(Error::InvalidInput("frequency grid must be nonempty".into()));
    }
    let omegas = omega_grid(grid_size);
    let matrices: Vec<_> = omegas.iter().map(|&w| spectral_matrix(lagcovs, w)).collect();
    let eigenvalues: Vec<Vec<f64>> = matrices.iter().map(hermitian_eigenvalues).collect();
    let mut alpha = eigenvalues
        .iter()
        .filter_map(|e| e.last().copied())
        .fold(f64::INFINITY, f64::min);
    let mut m = grid_size;
    for _ in 0..6 {
        m *= 2;
        // odd indices of the doubled grid are the new points
        let fresh: Vec<f64> = omega_grid(m).into_iter().step_by(2).collect();
        let refined = alpha.min(grid_min_eigenvalue(lagcovs, &fresh));
        let moved = (alpha - refined).abs();
        alpha = refined;
        if moved < 1e-8 {
            break;
        }
    }
    Ok(SpectralDensity {
        omegas,
        matrices,
        eigenvalues,
        alpha,
        truncated: !lagcovs.is_exhaustive(),
    })
}

/// Largest entrywise modulus of `C_h - (2pi/m) sum_k f[w_k] e^{i h w_k}`.
pub fn spectral_duality_check(lagcovs: &LagCovSet, spectral: &SpectralDensity, h: i64) -> Result<f64> {
    let target = lagcovs.lag(h)?;
    let d = lagcovs.dim();
    let weight = 2.0 * PI / spectral.omegas.len() as f64;
    let mut integral = DMatrix::from_element(d, d, Complex::new(0.0, 0.0));
    for (w, f) in spectral.omegas.iter().zip(&spectral.matrices) {
        integral += f * Complex::from_polar(weight, h as f64 * w);
    }
    let mut worst = 0.0_f64;
    for l in 0..d {
        for j in 0..d {
            worst = worst.max((integral[(l, j)] - Complex::new(target[(l, j)], 0.0)).norm());
        }
    }
    Ok(worst)
}

/// Eigenvalues of `C_0` (nonincreasing) and the orthogonal matrix whose
/// columns are the eigenvectors; each column's first nonzero entry is positive.
pub fn covariance_eigen(c0: &CoordOperator) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if c0.nrows() != c0.ncols() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let (mut values, mut vectors) = sym_eigen_sorted(c0);
    if let Some(&min) = values.last() {
        if min < -1e-8 {
            return Err(Error::NotPsd(min));
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    for mut col in vectors.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok((values, vectors))
}

/// Covariance eigenbasis as grid functions: rotates `basis` (on which `c0` is
/// expressed) by the eigenvectors of `c0`.
pub fn covariance_eigenbasis(c0: &CoordOperator, basis: &OrthonormalBasis) -> Result<(Vec<f64>, OrthonormalBasis)> {
    if c0.nrows() > basis.dim() {
        return Err(Error::Dimension(format!(
            "covariance of dimension {} on a basis of size {}",
            c0.nrows(),
            basis.dim()
        )));
    }
    let (values, vectors) = covariance_eigen(c0)?;
    let mut rotation = DMatrix::zeros(basis.dim(), c0.nrows());
    rotation.view_mut((0, 0), (c0.nrows(), c0.ncols())).copy_from(&vectors);
    let rotated = basis.rotated(&rotation, BasisKind::CovarianceEigenbasis)?;
    Ok((values, rotated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Grid;
    use crate::process::{simulate, simulate_noise, NoiseSpec};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn ma1(gamma: f64) -> LinearProcessModel {
        LinearProcessModel::fma(NoiseSpec::new(vec![1.0]).unwrap(), vec![scalar(gamma)]).unwrap()
    }

    #[test]
    fn fma_lags_vanish_beyond_order() {
        let noise = NoiseSpec::new(vec![1.0, 0.5]).unwrap();
        let g1 = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2]);
        let g2 = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.4, 0.1]);
        let m = LinearProcessModel::fma(noise, vec![g1, g2]).unwrap();
        assert_eq!(analytic_lag_cov_fma(&m, 3).unwrap(), DMatrix::zeros(2, 2));
        assert!(analytic_lag_cov_fma(&m, 2).unwrap().amax() > 0.0);
    }

    #[test]
    fn scalar_ma1_lags() {
        let m = ma1(0.5);
        assert!((analytic_lag_cov_fma(&m, 0).unwrap()[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((analytic_lag_cov_fma(&m, 1).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_gammas_give_noise_covariance() {
        let noise = NoiseSpec::new(vec![2.0, 1.0]).unwrap();
        let m = LinearProcessModel::fma(noise.clone(), vec![DMatrix::zeros(2, 2)]).unwrap();
        assert_eq!(analytic_lag_cov_fma(&m, 0).unwrap(), noise.covariance());
        assert_eq!(analytic_lag_cov_fma(&m, 1).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn far1_zero_phi() {
        let noise = NoiseSpec::new(vec![1.0, 0.5]).unwrap();
        let m = LinearProcessModel::far1(noise.clone(), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(analytic_lag_cov_far1(&m, 0, FAR_TOL).unwrap(), noise.covariance());
        assert_eq!(analytic_lag_cov_far1(&m, 1, FAR_TOL).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn far1_scalar_geometric_series() {
        let m = LinearProcessModel::far1(NoiseSpec::new(vec![1.0]).unwrap(), scalar(0.8)).unwrap();
        let c0 = analytic_lag_cov_far1(&m, 0, FAR_TOL).unwrap()[(0, 0)];
        let c1 = analytic_lag_cov_far1(&m, 1, FAR_TOL).unwrap()[(0, 0)];
        assert!((c0 - 1.0 / 0.36).abs() < 1e-10);
        assert!((c1 - 0.8 / 0.36).abs() < 1e-10);
    }

    #[test]
    fn far1_diagonal() {
        let phi = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]));
        let m = LinearProcessModel::far1(NoiseSpec::new(vec![1.0, 1.0]).unwrap(), phi).unwrap();
        let c = analytic_lag_cov_far1(&m, 0, FAR_TOL).unwrap();
        assert!((c[(0, 0)] - 4.0 / 3.0).abs() < 1e-11);
        assert!((c[(1, 1)] - 25.0 / 24.0).abs() < 1e-11);
        assert!(c[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn empirical_of_constant_is_zero() {
        let traj = vec![DVector::from_vec(vec![1.0, -2.0]); 20];
        assert_eq!(empirical_lag_cov(&traj, 0).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(empirical_lag_cov(&traj, 3).unwrap(), DMatrix::zeros(2, 2));
        assert!(empirical_lag_cov(&traj, 20).is_err());
    }

    #[test]
    fn empirical_ma1_lag_one() {
        let n = 100_000;
        let traj = simulate(&ma1(0.5), n, 13).unwrap().observations;
        let c1 = empirical_lag_cov(&traj, 1).unwrap()[(0, 0)];
        let sd = ((1.25f64.powi(2) + 3.0 * 0.25) / n as f64).sqrt();
        assert!((c1 - 0.5).abs() <= 3.0 * sd);
    }

    #[test]
    fn empirical_noise_lag_zero() {
        let n = 100_000;
        let alpha = [1.0, 0.25];
        let eps = simulate_noise(&NoiseSpec::new(alpha.to_vec()).unwrap(), n, 17);
        let c0 = empirical_lag_cov(&eps, 0).unwrap();
        for i in 0..2 {
            assert!((c0[(i, i)] - alpha[i]).abs() <= 3.0 * alpha[i] * (2.0 / n as f64).sqrt());
        }
        assert!(c0[(0, 1)].abs() <= 3.0 * (alpha[0] * alpha[1] / n as f64).sqrt());
    }

    #[test]
    fn projection_is_truncation() {
        let m4 = DMatrix::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let sym = &m4 * m4.transpose();
        let set = LagCovSet::new(vec![sym.clone(), m4.clone()], false, Provenance::Analytic).unwrap();
        assert_eq!(projected_lag_cov(&set, 4, 4, 1).unwrap(), m4);
        assert_eq!(projected_lag_cov(&set, 1, 1, 0).unwrap()[(0, 0)], sym[(0, 0)]);
        let block = projected_lag_cov(&set, 3, 2, 1).unwrap();
        assert_eq!(block, m4.view((0, 0), (3, 2)).into_owned());
        assert_eq!(
            projected_lag_cov(&set, 2, 3, -1).unwrap(),
            m4.transpose().view((0, 0), (2, 3)).into_owned()
        );
        assert!(projected_lag_cov(&set, 5, 1, 0).is_err());
        assert!(set.lag(2).is_err());
    }

    #[test]
    fn block_covariance_shapes() {
        let set = analytic_lag_covs(&ma1(0.5), 3).unwrap();
        let one = assemble_block_covariance(&set, &[1]).unwrap();
        assert_eq!(one.matrix()[(0, 0)], 1.25);
        let three = assemble_block_covariance(&set, &[1, 1, 1]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.25, 0.5, 0.0, 0.5, 1.25, 0.5, 0.0, 0.5, 1.25]);
        assert_eq!(three.matrix(), &expected);
        assert!(assemble_block_covariance(&set, &[2]).is_err());
    }

    #[test]
    fn white_noise_block_is_diagonal() {
        let noise = NoiseSpec::new(vec![1.0, 0.5, 0.2]).unwrap();
        let set = analytic_lag_covs(&LinearProcessModel::white_noise(noise), 4).unwrap();
        let g = assemble_block_covariance(&set, &[1, 2, 3]).unwrap();
        let mut off = g.matrix().clone();
        off.fill_diagonal(0.0);
        assert_eq!(off.amax(), 0.0);
        assert_eq!(g.size(), 6);
        // X_3 occupies the first three rows
        assert_eq!(
            g.block(3, 3),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 0.2]))
        );
    }

    #[test]
    fn mixed_dimension_blocks() {
        let noise = NoiseSpec::new(vec![1.0, 0.5, 0.2]).unwrap();
        let g1 = DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, 0.2, -0.2, 0.1, 0.0, 0.3, 0.1]);
        let set = analytic_lag_covs(&LinearProcessModel::fma(noise, vec![g1]).unwrap(), 3).unwrap();
        let g = assemble_block_covariance(&set, &[1, 2, 3]).unwrap();
        let c1 = set.lag(1).unwrap();
        assert_eq!(g.block(3, 2), c1.view((0, 0), (3, 2)).into_owned());
        assert_eq!(g.block(2, 3), c1.transpose().view((0, 0), (2, 3)).into_owned());
        assert!(g.min_eigenvalue() >= -1e-8);
    }

    #[test]
    fn white_noise_spectrum() {
        let set = analytic_lag_covs(
            &LinearProcessModel::white_noise(NoiseSpec::new(vec![1.0, 1.0]).unwrap()),
            2,
        )
        .unwrap();
        let sd = spectral_density(&set, 64).unwrap();
        for f in &sd.matrices {
            for l in 0..2 {
                for j in 0..2 {
                    let expected = if l == j { 1.0 / (2.0 * PI) } else { 0.0 };
                    assert!((f[(l, j)] - Complex::new(expected, 0.0)).norm() < 1e-15);
                }
            }
        }
        assert!((sd.alpha - 1.0 / (2.0 * PI)).abs() < 1e-15);
        for h in 1..4 {
            assert!(spectral_duality_check(&set, &sd, h).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn scalar_ma1_spectrum() {
        let set = analytic_lag_covs(&ma1(0.5), 1).unwrap();
        let sd = spectral_density(&set, 512).unwrap();
        for (w, f) in sd.omegas.iter().zip(&sd.matrices) {
            let expected = (1.25 + w.cos()) / (2.0 * PI);
            assert!((f[(0, 0)].re - expected).abs() < 1e-14);
        }
        assert!((sd.alpha - 0.25 / (2.0 * PI)).abs() < 1e-12);
        assert!(sd.is_positive());
        assert!(spectral_duality_check(&set, &sd, 1).unwrap() <= 1e-6);
        assert!(spectral_duality_check(&set, &sd, 0).unwrap() <= 1e-6);
    }

    #[test]
    fn unit_root_ma1_has_zero_alpha() {
        let set = analytic_lag_covs(&ma1(1.0), 1).unwrap();
        let sd = spectral_density(&set, 512).unwrap();
        assert!(sd.alpha.abs() < 1e-14);
        assert!(!sd.is_positive());
    }

    #[test]
    fn hermitian_eigenvalues_match_real_embedding() {
        let noise = NoiseSpec::new(vec![1.0, 0.6, 0.3]).unwrap();
        let g1 = DMatrix::from_row_slice(3, 3, &[0.3, 0.4, 0.0, -0.2, -0.2, 0.1, 0.5, 0.3, 0.1]);
        let set = analytic_lag_covs(&LinearProcessModel::fma(noise, vec![g1]).unwrap(), 1).unwrap();
        let f = spectral_matrix(&set, 0.7);
        // A + iB Hermitian <=> [[A, -B], [B, A]] symmetric with doubled spectrum
        let (a, b) = (f.map(|z| z.re), f.map(|z| z.im));
        let mut emb = DMatrix::zeros(6, 6);
        emb.view_mut((0, 0), (3, 3)).copy_from(&a);
        emb.view_mut((3, 3), (3, 3)).copy_from(&a);
        emb.view_mut((0, 3), (3, 3)).copy_from(&(-&b));
        emb.view_mut((3, 0), (3, 3)).copy_from(&b);
        let (real, _) = sym_eigen_sorted(&emb);
        let herm = hermitian_eigenvalues(&f);
        for (k, v) in herm.iter().enumerate() {
            assert!((v - real[2 * k]).abs() < 1e-12);
            assert!((v - real[2 * k + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_of_diagonal_is_identity() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let (vals, vecs) = covariance_eigen(&c).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert!((vecs - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn eigen_two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = covariance_eigen(&c).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        let s = 0.5f64.sqrt();
        assert!((vecs.column(0) - DVector::from_vec(vec![s, s])).amax() < 1e-14);
        assert!((vecs.column(1) - DVector::from_vec(vec![s, -s])).amax() < 1e-14);
    }

    #[test]
    fn eigen_rejects_indefinite() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(covariance_eigen(&c), Err(Error::NotPsd(_))));
    }

    #[test]
    fn eigen_reconstructs_random_psd() {
        let b = DMatrix::from_fn(6, 6, |r, c| ((r * 7 + c * 3) % 11) as f64 / 5.0 - 1.0);
        let c = &b * b.transpose();
        let (vals, vecs) = covariance_eigen(&c).unwrap();
        let recon = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!((recon - &c).norm() <= 1e-10 * c.norm().max(1.0));
    }

    #[test]
    fn eigenbasis_rotates_functions() {
        let grid = Grid::new(128).unwrap();
        let basis = OrthonormalBasis::fourier(grid, 3).unwrap();
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.5]);
        let (vals, eb) = covariance_eigenbasis(&c, &basis).unwrap();
        assert_eq!(eb.kind(), BasisKind::CovarianceEigenbasis);
        assert!((vals[0] - 3.0).abs() < 1e-14);
        let coords = crate::hilbert::project(&eb.functions()[0], &basis, 3).unwrap();
        let s = 0.5f64.sqrt();
        assert!((coords - DVector::from_vec(vec![s, s, 0.0])).amax() < 1e-12);
    }
}
