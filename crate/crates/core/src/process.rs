//! Functional white noise, FMA(q), FAR(1) and truncated MA(∞) processes in
//! basis coordinates.
//!
//! All models have mean zero. The noise covariance is diagonal along the
//! coordinate basis with eigenvalues `alpha_1 >= alpha_2 >= ... > 0`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hilbert::{operator_norm, CoordOperator, CoordVector};

/// Covariance of the driving white noise, diagonal along the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    eigenvalues: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("noise needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput(
                "noise eigenvalues must be finite and strictly positive".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("noise eigenvalues must be nonincreasing".into()));
        }
        Ok(Self { eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `sigma^2 = E||eps_0||^2`, the trace of the noise covariance.
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn covariance(&self) -> CoordOperator {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> CoordVector {
        DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|a| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                a.sqrt() * z
            }),
        )
    }
}

/// Coefficient structure of a [`LinearProcessModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `X_n = eps_n + sum_{j=1}^q gamma_j eps_{n-j}`; `q = 0` is white noise.
    Fma { gammas: Vec<CoordOperator> },
    /// `X_n = Phi X_{n-1} + eps_n`.
    Far1 { phi: CoordOperator },
    /// `X_n = eps_n + sum_{j=1}^J psi_j eps_{n-j}` with truncation level `J`.
    GeneralMa { psis: Vec<CoordOperator> },
}

/// Zero-mean functional linear process in basis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProcessModel {
    noise: NoiseSpec,
    kind: ModelKind,
}

fn check_square(ops: &[CoordOperator], dim: usize, what: &str) -> Result<()> {
    for (j, op) in ops.iter().enumerate() {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::Dimension(format!(
                "{what}_{} is {}x{}, expected {dim}x{dim}",
                j + 1,
                op.nrows(),
                op.ncols()
            )));
        }
        if op.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{what}_{} has non-finite entries", j + 1)));
        }
    }
    Ok(())
}

impl LinearProcessModel {
    pub fn white_noise(noise: NoiseSpec) -> Self {
        Self {
            noise,
            kind: ModelKind::Fma { gammas: Vec::new() },
        }
    }

    pub fn fma(noise: NoiseSpec, gammas: Vec<CoordOperator>) -> Result<Self> {
        check_square(&gammas, noise.dim(), "gamma")?;
        Ok(Self {
            noise,
            kind: ModelKind::Fma { gammas },
        })
    }

    /// FAR(1); requires `||Phi||_L < 1`.
    pub fn far1(noise: NoiseSpec, phi: CoordOperator) -> Result<Self> {
        check_square(std::slice::from_ref(&phi), noise.dim(), "phi")?;
        let norm = operator_norm(&phi);
        if norm >= 1.0 {
            return Err(Error::NotStationary { norm });
        }
        Ok(Self {
            noise,
            kind: ModelKind::Far1 { phi },
        })
    }

    /// Truncated MA(∞). `declared_norms`, when given, must match `||psi_j||_L`
    /// within `1e-8`.
    pub fn general_ma(noise: NoiseSpec, psis: Vec<CoordOperator>, declared_norms: Option<&[f64]>) -> Result<Self> {
        check_square(&psis, noise.dim(), "psi")?;
        if let Some(declared) = declared_norms {
            if declared.len() != psis.len() {
                return Err(Error::InvalidInput(format!(
                    "{} declared norms for truncation level {}",
                    declared.len(),
                    psis.len()
                )));
            }
            for (j, (psi, d)) in psis.iter().zip(declared).enumerate() {
                let actual = operator_norm(psi);
                if (actual - d).abs() > 1e-8 {
                    return Err(Error::InvalidInput(format!(
                        "declared norm of psi_{} is {d}, actual {actual}",
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            noise,
            kind: ModelKind::GeneralMa { psis },
        })
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Finite MA order (`q` or `J`); `None` for FAR(1).
    pub fn ma_order(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::Fma { gammas } => Some(gammas.len()),
            ModelKind::GeneralMa { psis } => Some(psis.len()),
            ModelKind::Far1 { .. } => None,
        }
    }

    /// MA coefficients `psi_0 = I, psi_1, ..., psi_count`.
    pub fn ma_coefficients(&self, count: usize) -> Vec<CoordOperator> {
        let d = self.dim();
        let mut out = Vec::with_capacity(count + 1);
        out.push(DMatrix::identity(d, d));
        match &self.kind {
            ModelKind::Fma { gammas: ops } | ModelKind::GeneralMa { psis: ops } => {
                for j in 1..=count {
                    out.push(ops.get(j - 1).cloned().unwrap_or_else(|| DMatrix::zeros(d, d)));
                }
            }
            ModelKind::Far1 { phi } => {
                for j in 1..=count {
                    let next = phi * &out[j - 1];
                    out.push(next);
                }
            }
        }
        out
    }

    /// `sum_{j>=1} ||psi_j||_L^2` over the first `terms` coefficients.
    pub fn psi_norm_sq_sum(&self, terms: usize) -> f64 {
        self.ma_coefficients(terms)
            .iter()
            .skip(1)
            .map(|p| operator_norm(p).powi(2))
            .fold(0.0, |acc, v| acc + v)
    }

    fn far_burn_in(phi: &CoordOperator) -> usize {
        let norm = operator_norm(phi);
        if norm <= 0.0 {
            0
        } else {
            (1e-8_f64.ln() / norm.ln()).ceil().max(0.0) as usize
        }
    }
}

/// `n` draws of the noise process, reproducible per seed.
pub fn simulate_noise(spec: &NoiseSpec, n: usize, seed: u64) -> Vec<CoordVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| spec.draw(&mut rng)).collect()
}

/// A simulated path together with the noise realisations `eps_t` that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<CoordVector>,
    pub noise: Vec<CoordVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Simulates `n` consecutive observations.
///
/// Moving averages draw their presample noise first, so the path is exactly
/// stationary. FAR(1) starts from zero and discards
/// `ceil(log(1e-8) / log ||Phi||_L)` burn-in steps.
pub fn simulate(model: &LinearProcessModel, n: usize, seed: u64) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidInput("trajectory length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    match &model.kind {
        ModelKind::Fma { gammas: ops } | ModelKind::GeneralMa { psis: ops } => {
            let q = ops.len();
            let eps: Vec<CoordVector> = (0..n + q).map(|_| model.noise.draw(&mut rng)).collect();
            let observations = (0..n)
                .map(|t| {
                    let mut x = eps[t + q].clone();
                    for (j, op) in ops.iter().enumerate() {
                        x += op * &eps[t + q - j - 1];
                    }
                    x
                })
                .collect();
            Ok(Trajectory {
                observations,
                noise: eps[q..].to_vec(),
            })
        }
        ModelKind::Far1 { phi } => {
            let norm = operator_norm(phi);
            if norm >= 1.0 {
                return Err(Error::NotStationary { norm });
            }
            let burn = LinearProcessModel::far_burn_in(phi);
            let mut x = DVector::zeros(d);
            let mut observations = Vec::with_capacity(n);
            let mut noise = Vec::with_capacity(n);
            for t in 0..burn + n {
                let e = model.noise.draw(&mut rng);
                x = phi * &x + &e;
                if t >= burn {
                    observations.push(x.clone());
                    noise.push(e);
                }
            }
            Ok(Trajectory { observations, noise })
        }
    }
}

/// Truncated inverse representation `X_n = eps_n + sum_j pi_j X_{n-j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseRepresentation {
    /// `pi_1, ..., pi_M`.
    pub pi: Vec<CoordOperator>,
    /// Upper bound on `sum_{j>M} ||pi_j||_L`.
    pub tail_bound: f64,
}

impl InverseRepresentation {
    pub fn truncation(&self) -> usize {
        self.pi.len()
    }

    pub fn pi_norm_sum(&self) -> f64 {
        self.pi.iter().map(operator_norm).fold(0.0, |acc, v| acc + v)
    }

    /// `sum_{j > m} ||pi_j||_L`, with the declared remainder beyond `M` folded in.
    pub fn tail_from(&self, m: usize) -> f64 {
        self.pi
            .iter()
            .skip(m)
            .map(operator_norm)
            .fold(self.tail_bound, |acc, v| acc + v)
    }
}

/// Inverse representation for models where invertibility can be certified:
/// FMA(1) with `||gamma_1||_L < 1`, white noise, and FAR(1).
pub fn inverse_representation(model: &LinearProcessModel, m: usize) -> Result<InverseRepresentation> {
    let d = model.dim();
    match &model.kind {
        ModelKind::Far1 { phi } => {
            let mut pi = vec![DMatrix::zeros(d, d); m];
            if m > 0 {
                pi[0] = phi.clone();
            }
            Ok(InverseRepresentation { pi, tail_bound: 0.0 })
        }
        ModelKind::Fma { gammas } if gammas.is_empty() => Ok(InverseRepresentation {
            pi: vec![DMatrix::zeros(d, d); m],
            tail_bound: 0.0,
        }),
        ModelKind::Fma { gammas } if gammas.len() == 1 => {
            let gamma = &gammas[0];
            let norm = operator_norm(gamma);
            if norm >= 1.0 {
                return Err(Error::NotInvertible(format!("FMA(1) with ||gamma_1||_L = {norm} >= 1")));
            }
            let mut pi = Vec::with_capacity(m);
            let mut power = DMatrix::identity(d, d);
            for j in 1..=m {
                power = &power * gamma;
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                pi.push(&power * sign);
            }
            let tail_bound = if norm == 0.0 {
                0.0
            } else {
                norm.powi(m as i32 + 1) / (1.0 - norm)
            };
            Ok(InverseRepresentation { pi, tail_bound })
        }
        ModelKind::Fma { gammas } => Err(Error::NotInvertible(format!(
            "FMA({}) inversion is not supported",
            gammas.len()
        ))),
        ModelKind::GeneralMa { .. } => Err(Error::NotInvertible("general MA inversion is not supported".into())),
    }
}

/// Largest entry of `sum_{j=1}^k pi_j psi_{k-j} - psi_k` over `k = 1..=M`.
pub fn inverse_identity_residual(model: &LinearProcessModel, inv: &InverseRepresentation) -> f64 {
    let m = inv.truncation();
    let psi = model.ma_coefficients(m);
    let mut worst = 0.0_f64;
    for k in 1..=m {
        let mut acc = -psi[k].clone();
        for j in 1..=k {
            acc += &inv.pi[j - 1] * &psi[k - j];
        }
        worst = worst.max(acc.amax());
    }
    worst
}
