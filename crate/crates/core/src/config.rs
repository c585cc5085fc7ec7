//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! kind = "fma"                      # white-noise | fma | far1 | general-ma
//! D = 2
//! noise.eigenvalues = [1.0, 0.5]
//! operators.gamma1 = [[0.5, 0.0], [0.1, 0.3]]
//!
//! [algorithm]
//! kind = "increasing"               # fixed | fma | increasing
//! schedule = "floor-sqrt(2)"
//!
//! [run]
//! n_max = 50
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{BasisKind, CoordOperator, Grid, OrthonormalBasis, DEFAULT_RESOLUTION};
use crate::innovations::{Schedule, DEFAULT_PIVOT_TOL};
use crate::process::{LinearProcessModel, ModelKind, NoiseSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    #[serde(rename = "D")]
    pub dim: usize,
    /// Order `q` of an FMA or truncation level `J` of a general MA.
    pub truncation: Option<usize>,
    pub noise: NoiseSection,
    #[serde(default)]
    pub operators: BTreeMap<String, Vec<Vec<f64>>>,
    /// Declared `||psi_j||_L` for general moving averages.
    pub psi_norms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// `fourier` or `user-supplied`: the basis the model coordinates refer to.
    #[serde(default = "default_basis_kind")]
    pub kind: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Basis file for `user-supplied`.
    pub path: Option<PathBuf>,
    /// Predict in the eigenbasis of the process covariance.
    #[serde(default = "default_true")]
    pub eigenbasis: bool,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            kind: default_basis_kind(),
            resolution: default_resolution(),
            path: None,
            eigenbasis: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_algorithm")]
    pub kind: String,
    /// `D` for the fixed and FMA recursions; defaults to the model dimension.
    pub dim: Option<usize>,
    /// Schedule for the increasing recursion.
    pub schedule: Option<String>,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            kind: default_algorithm(),
            dim: None,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Simulated path length; defaults to `n_max`.
    pub length: Option<usize>,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pivot_tol")]
    pub pivot_tol: f64,
    #[serde(default = "default_omega_grid")]
    pub omega_grid: usize,
    pub trajectory: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Study: projection dimensions.
    pub d_grid: Option<Vec<usize>>,
    /// Study: sample sizes.
    pub n_grid: Option<Vec<usize>>,
    /// Study: largest lag in the eigenvalue-bound lemma.
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Study: number of steps in the block-covariance lemma.
    #[serde(default = "default_lemma_n")]
    pub lemma_n: usize,
    /// Write simulated curves as grid values instead of coordinates.
    #[serde(default)]
    pub reconstruct: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all run fields have defaults")
    }
}

fn default_basis_kind() -> String {
    "fourier".into()
}
fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}
fn default_true() -> bool {
    true
}
fn default_algorithm() -> String {
    "fixed".into()
}
fn default_n_max() -> usize {
    50
}
fn default_mc_runs() -> usize {
    2000
}
fn default_pivot_tol() -> f64 {
    DEFAULT_PIVOT_TOL
}
fn default_omega_grid() -> usize {
    crate::covariance::DEFAULT_OMEGA_GRID
}
fn default_max_lag() -> usize {
    10
}
fn default_lemma_n() -> usize {
    10
}

/// Which recursion to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Algorithm {
    Fixed { dim: usize },
    Fma { dim: usize },
    Increasing { schedule: Schedule },
}

impl Algorithm {
    /// Schedule equivalent of the algorithm (constant for the fixed kinds).
    pub fn schedule(&self) -> Schedule {
        match self {
            Algorithm::Fixed { dim } | Algorithm::Fma { dim } => Schedule::Constant(*dim),
            Algorithm::Increasing { schedule } => schedule.clone(),
        }
    }
}

fn keyed(key: &str, e: Error) -> Error {
    Error::InvalidInput(format!("{key}: {}", strip_prefix(&e)))
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::InvalidInput(m) | Error::Parse(m) | Error::Dimension(m) | Error::NotInvertible(m) => m.clone(),
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("config `{}`: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Builds the model, failing with a message naming the offending key.
    pub fn build_model(&self) -> Result<LinearProcessModel> {
        let m = &self.model;
        let noise = NoiseSpec::new(m.noise.eigenvalues.clone()).map_err(|e| keyed("model.noise.eigenvalues", e))?;
        if noise.dim() != m.dim {
            return Err(Error::InvalidInput(format!(
                "model.noise.eigenvalues: {} values for D = {}",
                noise.dim(),
                m.dim
            )));
        }
        let operator = |name: &str| -> Result<Option<CoordOperator>> {
            let Some(rows) = m.operators.get(name) else {
                return Ok(None);
            };
            let key = format!("model.operators.{name}");
            if rows.len() != m.dim || rows.iter().any(|r| r.len() != m.dim) {
                return Err(Error::InvalidInput(format!("{key}: expected a {0}x{0} matrix", m.dim)));
            }
            Ok(Some(DMatrix::from_row_iterator(
                m.dim,
                m.dim,
                rows.iter().flatten().copied(),
            )))
        };
        let numbered = |prefix: &str| -> Result<Vec<CoordOperator>> {
            let count = match m.truncation {
                Some(q) => q,
                None => (1..)
                    .take_while(|j| m.operators.contains_key(&format!("{prefix}{j}")))
                    .count(),
            };
            (1..=count)
                .map(|j| {
                    operator(&format!("{prefix}{j}"))?.ok_or_else(|| {
                        Error::InvalidInput(format!("model.operators.{prefix}{j}: missing (truncation = {count})"))
                    })
                })
                .collect()
        };
        let allowed = |prefix: &str| -> Result<()> {
            for name in m.operators.keys() {
                let ok = name
                    .strip_prefix(prefix)
                    .is_some_and(|rest| rest.is_empty() || rest.parse::<usize>().is_ok());
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "model.operators.{name}: not used by model kind `{}`",
                        m.kind
                    )));
                }
            }
            Ok(())
        };
        match m.kind.as_str() {
            "white-noise" => {
                if let Some(name) = m.operators.keys().next() {
                    return Err(Error::InvalidInput(format!(
                        "model.operators.{name}: white noise takes no operators"
                    )));
                }
                Ok(LinearProcessModel::white_noise(noise))
            }
            "fma" => {
                allowed("gamma")?;
                LinearProcessModel::fma(noise, numbered("gamma")?).map_err(|e| keyed("model.operators", e))
            }
            "far1" => {
                allowed("phi")?;
                let phi = operator("phi")?.ok_or_else(|| Error::InvalidInput("model.operators.phi: missing".into()))?;
                LinearProcessModel::far1(noise, phi).map_err(|e| match e {
                    Error::NotStationary { .. } => Error::InvalidInput(format!("model.operators.phi: {e}")),
                    other => keyed("model.operators.phi", other),
                })
            }
            "general-ma" => {
                allowed("psi")?;
                LinearProcessModel::general_ma(noise, numbered("psi")?, m.psi_norms.as_deref())
                    .map_err(|e| keyed("model.psi_norms", e))
            }
            other => Err(Error::InvalidInput(format!(
                "model.kind: unknown kind `{other}` (expected white-noise, fma, far1 or general-ma)"
            ))),
        }
    }

    /// The basis the model coordinates refer to.
    pub fn build_basis(&self) -> Result<OrthonormalBasis> {
        let b = &self.basis;
        let basis = match BasisKind::from_tag(&b.kind).map_err(|e| keyed("basis.kind", e))? {
            BasisKind::Fourier => {
                let grid = Grid::new(b.resolution).map_err(|e| keyed("basis.resolution", e))?;
                OrthonormalBasis::fourier(grid, self.model.dim).map_err(|e| keyed("basis.resolution", e))?
            }
            BasisKind::UserSupplied => {
                let path = b
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("basis.path: required for a user-supplied basis".into()))?;
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::InvalidInput(format!("basis.path: `{}`: {e}", path.display())))?;
                crate::io::read_basis(std::io::BufReader::new(file)).map_err(|e| keyed("basis.path", e))?
            }
            BasisKind::CovarianceEigenbasis => return Err(Error::InvalidInput(
                "basis.kind: model coordinates refer to fourier or user-supplied; set basis.eigenbasis for prediction"
                    .into(),
            )),
        };
        if basis.dim() < self.model.dim {
            return Err(Error::InvalidInput(format!(
                "basis.path: {} functions for model dimension {}",
                basis.dim(),
                self.model.dim
            )));
        }
        Ok(basis)
    }

    pub fn build_algorithm(&self) -> Result<Algorithm> {
        let a = &self.algorithm;
        let dim = a.dim.unwrap_or(self.model.dim);
        let check_dim = |d: usize| -> Result<usize> {
            if d == 0 || d > self.model.dim {
                return Err(Error::InvalidInput(format!(
                    "algorithm.dim: {d} outside 1..={}",
                    self.model.dim
                )));
            }
            Ok(d)
        };
        let algorithm = match a.kind.as_str() {
            "fixed" => Algorithm::Fixed { dim: check_dim(dim)? },
            "fma" => Algorithm::Fma { dim: check_dim(dim)? },
            "increasing" => {
                let text = a
                    .schedule
                    .as_deref()
                    .ok_or_else(|| Error::InvalidInput("algorithm.schedule: required for `increasing`".into()))?;
                let schedule: Schedule = text.parse().map_err(|e| keyed("algorithm.schedule", e))?;
                schedule
                    .dims(self.run.n_max + 1, self.model.dim)
                    .map_err(|e| keyed("algorithm.schedule", e))?;
                Algorithm::Increasing { schedule }
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "algorithm.kind: unknown kind `{other}` (expected fixed, fma or increasing)"
                )))
            }
        };
        if a.schedule.is_some() && !matches!(algorithm, Algorithm::Increasing { .. }) {
            return Err(Error::InvalidInput(format!(
                "algorithm.schedule: only used by `increasing`, not `{}`",
                a.kind
            )));
        }
        Ok(algorithm)
    }

    /// Checks the run section against the model.
    pub fn validate_run(&self) -> Result<()> {
        let r = &self.run;
        if r.n_max == 0 {
            return Err(Error::InvalidInput("run.n_max: must be positive".into()));
        }
        if r.length == Some(0) {
            return Err(Error::InvalidInput("run.length: must be positive".into()));
        }
        if r.mc_runs < 2 {
            return Err(Error::InvalidInput("run.mc_runs: need at least 2".into()));
        }
        if !(r.pivot_tol > 0.0 && r.pivot_tol < 1.0) {
            return Err(Error::InvalidInput("run.pivot_tol: must lie in (0, 1)".into()));
        }
        if r.omega_grid == 0 {
            return Err(Error::InvalidInput("run.omega_grid: must be positive".into()));
        }
        if let Some(ds) = &r.d_grid {
            if ds.is_empty() || ds.iter().any(|&d| d == 0 || d > self.model.dim) {
                return Err(Error::InvalidInput(format!(
                    "run.d_grid: values must lie in 1..={}",
                    self.model.dim
                )));
            }
        }
        if let Some(ns) = &r.n_grid {
            if ns.is_empty() || ns.contains(&0) {
                return Err(Error::InvalidInput("run.n_grid: values must be positive".into()));
            }
        }
        Ok(())
    }

    /// Full lint: model, basis, algorithm and run.
    pub fn validate(&self) -> Result<Validated> {
        let model = self.build_model()?;
        let basis = self.build_basis()?;
        let algorithm = self.build_algorithm()?;
        self.validate_run()?;
        Ok(Validated {
            model,
            basis,
            algorithm,
        })
    }
}

/// Built objects of a valid configuration.
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: LinearProcessModel,
    pub basis: OrthonormalBasis,
    pub algorithm: Algorithm,
}

/// SHA-256 of a canonical text rendering of the model.
pub fn model_hash(model: &LinearProcessModel) -> String {
    let mut text = String::new();
    let (kind, ops): (&str, Vec<&CoordOperator>) = match model.kind() {
        ModelKind::Fma { gammas } => ("fma", gammas.iter().collect()),
        ModelKind::Far1 { phi } => ("far1", vec![phi]),
        ModelKind::GeneralMa { psis } => ("general-ma", psis.iter().collect()),
    };
    let _ = writeln!(text, "kind={kind} D={}", model.dim());
    let noise: Vec<String> = model.noise().eigenvalues().iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(text, "noise={}", noise.join(","));
    for (j, op) in ops.iter().enumerate() {
        let cells: Vec<String> = op
            .row_iter()
            .flat_map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>())
            .collect();
        let _ = writeln!(text, "op{}={}", j + 1, cells.join(","));
    }
    hex::encode(Sha256::digest(text.as_bytes()))
}
