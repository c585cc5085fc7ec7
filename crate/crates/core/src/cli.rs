//! The `flip` command line: simulate, predict, study and validate.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or model validation,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use crate::analysis::{
    decomposition_series, excess_error_series, fit_rate_constant, lemma_checks, rate_bound_series, spectral_lag_count,
    theta_convergence, EigenFrame, StudySettings,
};
use crate::config::{model_hash, Algorithm, ExperimentConfig, Validated};
use crate::covariance::{analytic_lag_covs, covariance_eigenbasis, spectral_density};
use crate::error::Error;
use crate::hilbert::{project, CoordVector, GridFunction};
use crate::innovations::{
    detect_fma_order, forecast, innovations_fixed, innovations_fma, innovations_increasing, InnovationsState,
};
use crate::io::{fmt_value, read_trajectory, write_basis, write_lagcov, write_spectral, write_state, write_trajectory};
use crate::process::{inverse_representation, simulate};

#[derive(Debug, Parser)]
#[command(
    name = "flip",
    version,
    about = "Innovations-algorithm prediction of functional linear processes"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override `run.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output format for tables printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the innovations state (predict only).
    #[arg(long, global = true, value_name = "PATH")]
    dump_state: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV with a metadata sidecar.
    Simulate {
        /// Output path; overrides `run.trajectory`. Stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-step predictions for a trajectory.
    Predict {
        /// Input trajectory; overrides `run.trajectory`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Output path; overrides `run.predictions`. Stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error decompositions, rate bounds and lemma checks.
    Study {
        /// Output directory; overrides `run.out_dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a configuration without running anything.
    Validate,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(stderr, "error: {}", e.message());
        return e.exit_code();
    }
    match execute(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("FLIP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("FLIP_THREADS: `{value}` is not a positive integer")))?;
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <PATH> is required".into()))?;
    let mut config = ExperimentConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    let validated = config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if cli.dump_state.is_some() && !matches!(cli.command, Command::Predict { .. }) {
        return Err(CliError::Usage("--dump-state only applies to `predict`".into()));
    }
    match &cli.command {
        Command::Simulate { out } => cmd_simulate(&config, &validated, out.as_deref(), cli.format, stdout),
        Command::Predict { trajectory, out } => cmd_predict(
            &config,
            &validated,
            trajectory.as_deref(),
            out.as_deref(),
            cli.dump_state.as_deref(),
            cli.format,
            stdout,
            stderr,
        ),
        Command::Study { out_dir } => cmd_study(&config, &validated, out_dir.as_deref(), cli.format, stdout),
        Command::Validate => cmd_validate(&config, &validated, stdout),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{}`: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// A table cell; numbers print with 17 significant digits in CSV.
enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self, format: Format) -> String {
        match (self, format) {
            (Cell::Int(v), _) => v.to_string(),
            (Cell::Num(v), Format::Csv) => fmt_value(*v),
            (Cell::Num(v), Format::Table) => format!("{v:.6e}"),
            (Cell::Text(s), _) => s.clone(),
        }
    }
}

fn render_table(format: Format, header: &[&str], rows: &[Vec<Cell>]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|c| c.render(format)).collect())
        .collect();
    let mut out = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "{}", header.join(","));
            for row in &cells {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        Format::Table => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| {
                    cells
                        .iter()
                        .map(|r| r[c].len())
                        .chain(std::iter::once(header[c].len()))
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |items: Vec<&str>| -> String {
                items
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(header.to_vec()));
            for row in &cells {
                let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}

fn cmd_simulate(
    config: &ExperimentConfig,
    v: &Validated,
    out: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let length = config.run.length.unwrap_or(config.run.n_max);
    let seed = config.run.seed;
    let traj = simulate(&v.model, length, seed)?;
    let (rows, prefix): (Vec<CoordVector>, &str) = if config.run.reconstruct {
        let rows = traj
            .observations
            .iter()
            .map(|x| {
                v.basis
                    .reconstruct(&pad_to(x, v.basis.dim()))
                    .map(|f| DVector::from_column_slice(f.values()))
            })
            .collect::<crate::error::Result<_>>()?;
        (rows, "g")
    } else {
        (traj.observations.clone(), "c")
    };
    let target = out.map(Path::to_path_buf).or_else(|| config.run.trajectory.clone());
    match target {
        Some(path) => {
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &rows, prefix)?;
            write_file(&path, &buf)?;
            let mut meta = String::new();
            let _ = writeln!(meta, "model_hash = \"{}\"", model_hash(&v.model));
            let _ = writeln!(meta, "seed = {seed}");
            let _ = writeln!(meta, "length = {length}");
            let _ = writeln!(meta, "dim = {}", v.model.dim());
            let _ = writeln!(meta, "kind = \"{}\"", config.model.kind);
            let _ = writeln!(meta, "reconstruct = {}", config.run.reconstruct);
            write_file(&sidecar_path(&path), meta.as_bytes())?;
        }
        None => {
            let width = rows.first().map(|r| r.len()).unwrap_or(0);
            let header: Vec<String> = (1..=width).map(|i| format!("{prefix}{i}")).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let cells: Vec<Vec<Cell>> = rows.iter().map(|r| r.iter().map(|x| Cell::Num(*x)).collect()).collect();
            stdout
                .write_all(render_table(format, &header, &cells).as_bytes())
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
    }
    Ok(())
}

/// `traj.csv` -> `traj.csv.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn pad_to(x: &CoordVector, dim: usize) -> CoordVector {
    let mut out = DVector::zeros(dim);
    out.rows_mut(0, x.len()).copy_from(x);
    out
}

/// Rotation into the prediction coordinates: eigenvectors of `C_X`, or the identity.
fn prediction_frame(
    config: &ExperimentConfig,
    v: &Validated,
    n: usize,
) -> CliResult<(DMatrix<f64>, crate::covariance::LagCovSet)> {
    if config.basis.eigenbasis {
        let frame = EigenFrame::new(&v.model, n)?;
        Ok((frame.rotation, frame.lagcovs))
    } else {
        let d = v.model.dim();
        Ok((DMatrix::identity(d, d), analytic_lag_covs(&v.model, n)?))
    }
}

fn build_state(
    v: &Validated,
    lagcovs: &crate::covariance::LagCovSet,
    n: usize,
    pivot_tol: f64,
) -> CliResult<InnovationsState> {
    let state = match &v.algorithm {
        Algorithm::Fixed { dim } => innovations_fixed(&lagcovs.projected(*dim)?, n, pivot_tol)?,
        Algorithm::Fma { dim } => {
            let q = v
                .model
                .ma_order()
                .ok_or_else(|| CliError::Config("algorithm.kind: `fma` needs a moving-average model".into()))?;
            let projected = lagcovs.projected(*dim)?;
            let q_star = detect_fma_order(&projected, q);
            innovations_fma(&projected, q_star, n, pivot_tol)?
        }
        Algorithm::Increasing { schedule } => {
            let dims = schedule
                .dims(n + 1, v.model.dim())
                .map_err(|e| CliError::Config(format!("algorithm.schedule: {e}")))?;
            innovations_increasing(lagcovs, &dims, pivot_tol)?
        }
    };
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn cmd_predict(
    config: &ExperimentConfig,
    v: &Validated,
    trajectory: Option<&Path>,
    out: Option<&Path>,
    dump_state: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<()> {
    let path = trajectory
        .map(Path::to_path_buf)
        .or_else(|| config.run.trajectory.clone())
        .ok_or_else(|| CliError::Config("run.trajectory: required for predict (or pass --trajectory)".into()))?;
    let file = std::fs::File::open(&path).map_err(|e| io_error(&path, e))?;
    let rows = read_trajectory(file).map_err(|e| io_error(&path, e))?;
    let dim = v.model.dim();
    let resolution = v.basis.grid().resolution();
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let observations: Vec<CoordVector> = if width == dim {
        rows
    } else if width == resolution {
        rows.iter()
            .map(|r| {
                let f = GridFunction::new(v.basis.grid(), r.iter().copied().collect())?;
                project(&f, &v.basis, dim)
            })
            .collect::<crate::error::Result<_>>()?
    } else {
        return Err(CliError::Config(format!(
            "`{}`: {width} columns, expected {dim} coordinates or {resolution} grid values",
            path.display()
        )));
    };
    if observations.is_empty() {
        return Err(CliError::Config(format!("`{}`: no observations", path.display())));
    }
    let n_max = config.run.n_max;
    let n = observations.len().min(n_max);
    if observations.len() > n_max {
        let _ = writeln!(
            stderr,
            "note: using the first {n_max} of {} observations (run.n_max)",
            observations.len()
        );
    }
    let (rotation, lagcovs) = prediction_frame(config, v, n)?;
    let state = build_state(v, &lagcovs, n, config.run.pivot_tol)?;
    if let Some(dump) = dump_state {
        let mut buf = Vec::new();
        write_state(&mut buf, &state)?;
        write_file(dump, &buf)?;
    }
    let rotated: Vec<CoordVector> = observations[..n].iter().map(|x| rotation.tr_mul(x)).collect();
    let f = forecast(&state, &rotated)?;

    let mut header: Vec<String> = vec!["n".into()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.push("innovation_norm".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let cells: Vec<Vec<Cell>> = f
        .predictions
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let ambient = &rotation * pad_to(p, dim);
            let mut row = vec![Cell::Int(t + 1)];
            row.extend(ambient.iter().map(|x| Cell::Num(*x)));
            row.push(match f.innovations.get(t) {
                Some(u) => Cell::Num(u.norm()),
                None => Cell::Text(String::new()),
            });
            row
        })
        .collect();
    let target = out.map(Path::to_path_buf).or_else(|| config.run.predictions.clone());
    match target {
        Some(path) => write_file(&path, render_table(Format::Csv, &header, &cells).as_bytes()),
        None => stdout
            .write_all(render_table(format, &header, &cells).as_bytes())
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

/// `m_n = ceil(sqrt n)`, kept below `n`.
pub fn default_m_of_n(n: usize) -> usize {
    let r = n.isqrt();
    let ceil = if r * r == n { r } else { r + 1 };
    ceil.min(n.saturating_sub(1))
}

fn cmd_study(
    config: &ExperimentConfig,
    v: &Validated,
    out_dir: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.run.out_dir.clone())
        .ok_or_else(|| CliError::Config("run.out_dir: required for study (or pass --out-dir)".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let model = &v.model;
    let run = &config.run;
    let settings = StudySettings {
        mc_runs: run.mc_runs,
        seed: run.seed,
        pivot_tol: run.pivot_tol,
        omega_grid: run.omega_grid,
    };
    let default_dim = match &v.algorithm {
        Algorithm::Fixed { dim } | Algorithm::Fma { dim } => *dim,
        Algorithm::Increasing { .. } => model.dim(),
    };
    let d_grid = run.d_grid.clone().unwrap_or_else(|| vec![default_dim]);
    let n_grid = run.n_grid.clone().unwrap_or_else(|| vec![run.n_max]);
    let mut summary = String::new();

    // decomposition over (D, n)
    let mut rows = Vec::new();
    for &d in &d_grid {
        for r in decomposition_series(model, d, &n_grid, &settings)? {
            rows.push(vec![
                Cell::Int(r.dim),
                Cell::Int(r.n),
                Cell::Num(r.tail_sum),
                Cell::Num(r.v_nuclear),
                Cell::Num(r.v_nuclear_sq),
                Cell::Num(r.mc_mse.mean),
                Cell::Num(r.mc_mse.stderr),
                Cell::Num(r.residual()),
                Cell::Num(r.residual_sq()),
                Cell::Num(r.noise_floor),
            ]);
        }
    }
    let header = [
        "D",
        "n",
        "tail_sum",
        "v_nuclear",
        "v_nuclear_sq",
        "mc_mse",
        "mc_stderr",
        "residual",
        "residual_sq",
        "noise_floor",
    ];
    write_file(
        &dir.join("decomposition.csv"),
        render_table(Format::Csv, &header, &rows).as_bytes(),
    )?;
    summary.push_str(&render_table(format, &header, &rows));

    // rate bound and excess error under the algorithm's schedule
    let schedule = v.algorithm.schedule();
    let rate_header = [
        "n",
        "m_n",
        "d_n",
        "d_lagged",
        "pi_tail",
        "lambda_tail",
        "bound",
        "alpha",
        "scaled",
        "excess_mean",
        "excess_stderr",
    ];
    let mut rate_rows = Vec::new();
    match inverse_representation(model, 1) {
        Ok(_) => {
            let bounds = rate_bound_series(model, &schedule, default_m_of_n, &n_grid, &settings)?;
            let excess = excess_error_series(model, &schedule, &n_grid, &settings)?;
            for (b, e) in bounds.iter().zip(&excess) {
                rate_rows.push(vec![
                    Cell::Int(b.n),
                    Cell::Int(b.m_n),
                    Cell::Int(b.d_n),
                    Cell::Int(b.d_lagged),
                    Cell::Num(b.pi_tail),
                    Cell::Num(b.lambda_tail),
                    Cell::Num(b.bound),
                    Cell::Num(b.alpha),
                    Cell::Num(b.scaled),
                    Cell::Num(e.mean),
                    Cell::Num(e.stderr),
                ]);
            }
            let means: Vec<f64> = excess.iter().map(|e| e.mean).collect();
            let bs: Vec<f64> = bounds.iter().map(|b| b.bound).collect();
            let _ = writeln!(
                summary,
                "\nrate constant (least squares): {}",
                fmt_value(fit_rate_constant(&means, &bs))
            );
        }
        Err(e) => {
            let _ = writeln!(summary, "\nrate bound skipped: {e}");
        }
    }
    write_file(
        &dir.join("rate_bound.csv"),
        render_table(Format::Csv, &rate_header, &rate_rows).as_bytes(),
    )?;

    // lemma checks
    let pf = |pass: bool| Cell::Text(if pass { "pass" } else { "fail" }.into());
    let mut lemma_rows = Vec::new();
    for &d in &d_grid {
        let r = lemma_checks(model, d, run.lemma_n, run.max_lag, &settings)?;
        lemma_rows.push(vec![
            Cell::Int(d),
            Cell::Int(r.n),
            Cell::Int(r.max_lag),
            pf(r.eigen_bound.pass),
            Cell::Num(r.eigen_bound.slack),
            pf(r.block_spectrum.pass),
            Cell::Num(r.block_spectrum.slack),
            pf(r.spectral_positivity.pass),
            Cell::Num(r.alpha),
        ]);
    }
    let lemma_header = [
        "D",
        "n",
        "H",
        "eigen_bound",
        "eigen_slack",
        "block_spectrum",
        "block_slack",
        "spectral_positivity",
        "alpha",
    ];
    write_file(
        &dir.join("lemmas.csv"),
        render_table(Format::Csv, &lemma_header, &lemma_rows).as_bytes(),
    )?;
    summary.push('\n');
    summary.push_str(&render_table(format, &lemma_header, &lemma_rows));

    // coefficient convergence
    let theta_rows: Vec<Vec<Cell>> = theta_convergence(model, &schedule, &n_grid, 2, &settings)?
        .into_iter()
        .map(|t| vec![Cell::Int(t.n), Cell::Int(t.i), Cell::Num(t.distance)])
        .collect();
    write_file(
        &dir.join("theta.csv"),
        render_table(Format::Csv, &["n", "i", "distance"], &theta_rows).as_bytes(),
    )?;

    // spectral density, lag covariances and eigenbasis
    let d_max = *d_grid.iter().max().expect("d_grid is nonempty");
    let frame = EigenFrame::new(model, spectral_lag_count(model, run.max_lag))?;
    let sd = spectral_density(&frame.lagcovs.projected(d_max)?, run.omega_grid)?;
    let mut buf = Vec::new();
    write_spectral(&mut buf, &sd)?;
    write_file(&dir.join("spectral.csv"), &buf)?;

    let ambient = analytic_lag_covs(model, run.max_lag)?;
    let mut buf = Vec::new();
    write_lagcov(&mut buf, &ambient)?;
    write_file(&dir.join("lagcov.txt"), &buf)?;

    let (_, eigenbasis) = covariance_eigenbasis(&ambient.lags()[0], &v.basis)?;
    let mut buf = Vec::new();
    write_basis(&mut buf, &eigenbasis)?;
    write_file(&dir.join("basis.csv"), &buf)?;

    stdout
        .write_all(summary.as_bytes())
        .map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_validate(config: &ExperimentConfig, v: &Validated, stdout: &mut dyn Write) -> CliResult<()> {
    let algorithm = match &v.algorithm {
        Algorithm::Fixed { dim } => format!("fixed D={dim}"),
        Algorithm::Fma { dim } => format!("fma D={dim}"),
        Algorithm::Increasing { schedule } => format!("increasing schedule={schedule}"),
    };
    writeln!(
        stdout,
        "ok: model={} D={} basis={} algorithm={} n_max={} hash={}",
        config.model.kind,
        v.model.dim(),
        v.basis.kind(),
        algorithm,
        config.run.n_max,
        model_hash(&v.model)
    )
    .map_err(|e| CliError::Config(e.to_string()))
}
