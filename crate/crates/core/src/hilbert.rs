//! Grid-sampled representation of `L^2([0,1])`.
//!
//! Functions are sampled at the left endpoints `t_k = k / m`, `k = 0..m`, and
//! integrals use the rectangle rule with weight `1/m`. Under this quadrature the
//! coordinate map onto an orthonormal family is an exact isometry, so all the
//! downstream machinery can work on plain coordinate vectors and matrices.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coordinates `(<x, nu_1>, ..., <x, nu_D>)` of an element with respect to an
/// orthonormal family.
pub type CoordVector = DVector<f64>;

/// Coordinate matrix of a bounded operator between finite-dimensional
/// subspaces: entry `(l, j)` is `<A nu_j, nu_l>`.
pub type CoordOperator = DMatrix<f64>;

/// Tolerance used to accept a family of grid functions as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Default number of sample points.
pub const DEFAULT_RESOLUTION: usize = 256;

/// Uniform grid on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    resolution: usize,
}

impl Grid {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        Ok(Self { resolution })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Sample points `k / m`.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.resolution).map(move |k| k as f64 * h)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

/// A function in `L^2([0,1])` sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.resolution() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of resolution {}",
                values.len(),
                grid.resolution()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at sample {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.resolution()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt() * self.grid.spacing().sqrt()
    }

    fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.resolution(),
                right: other.grid.resolution(),
            });
        }
        Ok(())
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn scaled(&self, scale: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| v * scale).collect(),
        }
    }
}

/// Rectangle-rule inner product `h * sum_k f_k g_k`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_grid(g)?;
    let dot: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(dot * f.grid.spacing())
}

/// Where an orthonormal family came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Fourier,
    CovarianceEigenbasis,
    UserSupplied,
}

impl BasisKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BasisKind::Fourier => "fourier",
            BasisKind::CovarianceEigenbasis => "covariance-eigenbasis",
            BasisKind::UserSupplied => "user-supplied",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "fourier" => Ok(BasisKind::Fourier),
            "covariance-eigenbasis" => Ok(BasisKind::CovarianceEigenbasis),
            "user-supplied" => Ok(BasisKind::UserSupplied),
            other => Err(Error::Parse(format!("unknown basis kind `{other}`"))),
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Ordered orthonormal family `(nu_1, ..., nu_D)` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    grid: Grid,
    functions: Vec<GridFunction>,
    kind: BasisKind,
}

impl OrthonormalBasis {
    /// Constant function followed by `sqrt(2) cos(2 pi k t)`, `sqrt(2) sin(2 pi k t)` pairs.
    pub fn fourier(grid: Grid, dim: usize) -> Result<Self> {
        if dim == 0 || dim > grid.resolution() {
            return Err(Error::InvalidInput(format!(
                "Fourier basis size {dim} must lie in 1..={}",
                grid.resolution()
            )));
        }
        let functions = (1..=dim)
            .map(|j| {
                GridFunction::from_fn(grid, |t| match j {
                    1 => 1.0,
                    j if j % 2 == 0 => SQRT_2 * (2.0 * PI * (j / 2) as f64 * t).cos(),
                    j => SQRT_2 * (2.0 * PI * ((j - 1) / 2) as f64 * t).sin(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = Self {
            grid,
            functions,
            kind: BasisKind::Fourier,
        };
        basis.verify()?;
        Ok(basis)
    }

    /// Re-orthonormalizes a user-supplied family by modified Gram–Schmidt
    /// (two passes) and checks the result.
    pub fn from_functions(functions: Vec<GridFunction>) -> Result<Self> {
        Self::orthonormalized(functions, BasisKind::UserSupplied)
    }

    pub(crate) fn orthonormalized(functions: Vec<GridFunction>, kind: BasisKind) -> Result<Self> {
        let grid = functions
            .first()
            .map(|f| f.grid())
            .ok_or_else(|| Error::InvalidInput("empty basis".into()))?;
        if functions.len() > grid.resolution() {
            return Err(Error::InvalidInput(format!(
                "{} functions exceed grid resolution {}",
                functions.len(),
                grid.resolution()
            )));
        }
        let mut out: Vec<GridFunction> = Vec::with_capacity(functions.len());
        for (idx, f) in functions.into_iter().enumerate() {
            let original = f.norm();
            let mut v = f;
            for _ in 0..2 {
                for u in &out {
                    let c = inner_product(&v, u)?;
                    v = v.axpy(-c, u)?;
                }
            }
            let n = v.norm();
            let independent = n > 1e-10 * original.max(1e-300);
            if !independent {
                return Err(Error::InvalidInput(format!(
                    "basis function {} is linearly dependent on its predecessors",
                    idx + 1
                )));
            }
            out.push(v.scaled(1.0 / n));
        }
        let basis = Self {
            grid,
            functions: out,
            kind,
        };
        basis.verify()?;
        Ok(basis)
    }

    /// New basis `nu'_c = sum_r rotation[(r, c)] nu_r`.
    pub fn rotated(&self, rotation: &DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if rotation.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "rotation has {} rows for a basis of size {}",
                rotation.nrows(),
                self.dim()
            )));
        }
        let functions = (0..rotation.ncols())
            .map(|c| self.reconstruct(&rotation.column(c).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        let basis = Self {
            grid: self.grid,
            functions,
            kind,
        };
        basis.verify()?;
        Ok(basis)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[GridFunction] {
        &self.functions
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            inner_product(&self.functions[i], &self.functions[j]).expect("shared grid")
        })
    }

    fn verify(&self) -> Result<()> {
        let gram = self.gram_matrix();
        let dev = (gram - DMatrix::identity(self.dim(), self.dim()))
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal on this grid (Gram deviation {dev:e})"
            )));
        }
        Ok(())
    }

    /// Element with the given coordinates, `sum_i c_i nu_i`.
    pub fn reconstruct(&self, coords: &CoordVector) -> Result<GridFunction> {
        if coords.len() > self.dim() {
            return Err(Error::Dimension(format!(
                "{} coordinates for a basis of size {}",
                coords.len(),
                self.dim()
            )));
        }
        let mut values = vec![0.0; self.grid.resolution()];
        for (c, f) in coords.iter().zip(&self.functions) {
            for (acc, v) in values.iter_mut().zip(f.values()) {
                *acc += c * v;
            }
        }
        GridFunction::new(self.grid, values)
    }
}

/// Coordinates of `x` on the first `dim` basis functions.
pub fn project(x: &GridFunction, basis: &OrthonormalBasis, dim: usize) -> Result<CoordVector> {
    if dim > basis.dim() {
        return Err(Error::Dimension(format!(
            "projection dimension {dim} exceeds basis size {}",
            basis.dim()
        )));
    }
    let coords = basis.functions[..dim]
        .iter()
        .map(|nu| inner_product(x, nu))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(coords))
}

/// Largest singular value.
pub fn operator_norm(a: &CoordOperator) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Sum of singular values.
pub fn nuclear_norm(a: &CoordOperator) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().sum()
}
