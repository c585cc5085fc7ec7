//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p flip --test acceptance`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{diagonal_ma1, random_far1, random_fma, random_noise, random_operator, scalar_ma1};
use flip::analysis::{
    error_decomposition, excess_error_series, fit_rate_constant, lemma_checks, rate_bound_series, theta_convergence,
    StudySettings,
};
use flip::cli::default_m_of_n;
use flip::covariance::{analytic_lag_covs, spectral_density, spectral_duality_check, LagCovSet, Provenance};
use flip::hilbert::CoordVector;
use flip::innovations::{
    detect_fma_order, forecast, innovations_fixed, innovations_fma, innovations_increasing, oracle_coefficient_table,
    oracle_predict, Schedule, DEFAULT_PIVOT_TOL,
};
use flip::process::{simulate, LinearProcessModel, NoiseSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Excess error over rate bound, shared by every model in the rate family.
/// Calibrated once from the ratios printed by the rate criterion (largest
/// observed mean/bound about 7.4e-2, on the dense model at n = 10) and rounded
/// up with headroom.
const RATE_CONSTANT: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = fn() -> flip::Result<Outcome>;

fn max_abs_diff(a: &CoordVector, b: &CoordVector) -> f64 {
    (a - b).amax()
}

fn random_model(rng: &mut ChaCha8Rng, index: usize, max_dim: usize) -> LinearProcessModel {
    let ambient = rng.random_range(1..=max_dim);
    match index % 3 {
        0 => random_fma(rng, ambient, 1),
        1 => random_fma(rng, ambient, 2),
        _ => random_far1(rng, ambient),
    }
}

fn oracle_equivalence() -> flip::Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n_max = 20;
    let mut worst = 0.0_f64;
    for m in 0..50 {
        let model = random_model(&mut rng, m, 5);
        let d = rng.random_range(1..=model.dim());
        let lagcovs = analytic_lag_covs(&model, n_max)?.projected(d)?;
        let state = innovations_fixed(&lagcovs, n_max, DEFAULT_PIVOT_TOL)?;
        let table = oracle_coefficient_table(&lagcovs, &vec![d; n_max + 1], DEFAULT_PIVOT_TOL)?;
        for rep in 0..2 {
            let path = simulate(&model, n_max, 1000 * m as u64 + rep)?.observations;
            let f = forecast(&state, &path)?;
            for n in 1..=n_max {
                let oracle = oracle_predict(&table[n - 1], &path[..n])?;
                worst = worst.max(max_abs_diff(&f.predictions[n], &oracle));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(
        worst <= 1e-8 && secs <= 30.0,
        format!("50 models, max error {worst:.2e} (tol 1e-8), {secs:.2}s (limit 30s)"),
    ))
}

fn increasing_oracle_equivalence() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n_max = 15;
    let mut worst_oracle = 0.0_f64;
    let mut worst_fixed = 0.0_f64;
    for m in 0..30 {
        let model = random_model(&mut rng, m, 4);
        let ambient = model.dim();
        let lagcovs = analytic_lag_covs(&model, n_max)?;
        let paired: Vec<usize> = (0..=n_max).map(|t| (t / 2 + 1).min(ambient)).collect();
        let constant_dim = rng.random_range(1..=ambient);
        let constant = vec![constant_dim; n_max + 1];
        for dims in [&paired, &constant] {
            let state = innovations_increasing(&lagcovs, dims, DEFAULT_PIVOT_TOL)?;
            let table = oracle_coefficient_table(&lagcovs, dims, DEFAULT_PIVOT_TOL)?;
            let path = simulate(&model, n_max, 7 + m as u64)?.observations;
            let f = forecast(&state, &path)?;
            for n in 1..=n_max {
                let oracle = oracle_predict(&table[n - 1], &path[..n])?;
                worst_oracle = worst_oracle.max(max_abs_diff(&f.predictions[n], &oracle));
            }
        }
        let grown = innovations_increasing(&lagcovs, &constant, DEFAULT_PIVOT_TOL)?;
        let fixed = innovations_fixed(&lagcovs.projected(constant_dim)?, n_max, DEFAULT_PIVOT_TOL)?;
        let diff = grown.max_difference(&fixed).unwrap_or(f64::INFINITY);
        worst_fixed = worst_fixed.max(diff);
    }
    Ok(Outcome::new(
        worst_oracle <= 1e-8 && worst_fixed <= 1e-12,
        format!(
            "30 models, oracle error {worst_oracle:.2e} (tol 1e-8), constant vs fixed {worst_fixed:.2e} (tol 1e-12)"
        ),
    ))
}

fn fma_simplification() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n_max = 50;
    let mut worst = 0.0_f64;
    for m in 0..20 {
        let q = 1 + m % 2;
        let ambient = rng.random_range(1..=3);
        let model = random_fma(&mut rng, ambient, q);
        let d = rng.random_range(1..=ambient);
        let lagcovs = analytic_lag_covs(&model, q)?.projected(d)?;
        let q_star = detect_fma_order(&lagcovs, q);
        let sparse = innovations_fma(&lagcovs, q_star, n_max, DEFAULT_PIVOT_TOL)?;
        let full = innovations_fixed(&lagcovs, n_max, DEFAULT_PIVOT_TOL)?;
        worst = worst.max(sparse.max_difference(&full).unwrap_or(f64::INFINITY));
    }
    Ok(Outcome::new(
        worst <= 1e-12,
        format!("20 models, n = 50, max difference {worst:.2e} (tol 1e-12)"),
    ))
}

fn scalar_hand_values() -> flip::Result<Outcome> {
    let lagcovs = LagCovSet::new(
        vec![DMatrix::from_element(1, 1, 1.25), DMatrix::from_element(1, 1, 0.5)],
        true,
        Provenance::Analytic,
    )?;
    let state = innovations_fixed(&lagcovs, 1, DEFAULT_PIVOT_TOL)?;
    let (v0, theta11, v1) = (state.v(0)[(0, 0)], state.theta(1, 1)[(0, 0)], state.v(1)[(0, 0)]);
    let err = (v0 - 1.25).abs().max((theta11 - 0.4).abs()).max((v1 - 1.05).abs());
    Ok(Outcome::new(
        err <= 1e-12,
        format!("V0 = {v0}, theta11 = {theta11}, V1 = {v1}, max error {err:.1e} (tol 1e-12)"),
    ))
}

fn decomposition_identity() -> flip::Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let gamma = random_operator(&mut rng, 4, 0.6);
    let model = LinearProcessModel::fma(NoiseSpec::new(vec![1.0, 0.6, 0.3, 0.1])?, vec![gamma])?;
    let settings = StudySettings {
        seed: 5,
        ..StudySettings::default()
    };
    let r = error_decomposition(&model, 2, 30, &settings)?;
    let secs = start.elapsed().as_secs_f64();
    let residual = r.residual();
    let band = 3.0 * r.mc_mse.stderr;
    Ok(Outcome::new(
        residual.abs() <= band && r.mc_mse.runs == 2000 && secs <= 60.0,
        format!(
            "mc_mse {:.5} = tail {:.5} + ||V||_N {:.5} + residual {residual:.2e} (3 stderr {band:.2e}), {secs:.2}s (limit 60s)",
            r.mc_mse.mean, r.tail_sum, r.v_nuclear
        ),
    ))
}

fn noise_floor_convergence_check() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let dense = LinearProcessModel::fma(random_noise(&mut rng, 3), vec![random_operator(&mut rng, 3, 0.5)])?;
    let n_max = 50;
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_final = 0.0_f64;
    for model in [scalar_ma1(0.5), dense] {
        let lagcovs = analytic_lag_covs(&model, 1)?;
        let state = innovations_fixed(&lagcovs, n_max, DEFAULT_PIVOT_TOL)?;
        let v: Vec<f64> = (0..=n_max).map(|n| state.v_nuclear(n)).collect();
        for w in v.windows(2) {
            worst_increase = worst_increase.max(w[1] - w[0]);
        }
        worst_final = worst_final.max(v[n_max - 1] - v[n_max]);
    }
    Ok(Outcome::new(
        worst_increase <= 1e-9 && worst_final < 1e-6,
        format!("largest step increase {worst_increase:.2e} (tol 1e-9), final decrement {worst_final:.2e} (< 1e-6)"),
    ))
}

fn theta_to_psi() -> flip::Result<Outcome> {
    let settings = StudySettings::default();
    let scalar = theta_convergence(&scalar_ma1(0.5), &Schedule::Constant(1), &[5, 50], 1, &settings)?;
    let (s5, s50) = (scalar[0].distance, scalar[1].distance);

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let model = LinearProcessModel::fma(random_noise(&mut rng, 3), vec![random_operator(&mut rng, 3, 0.6)])?;
    let table = theta_convergence(&model, &Schedule::Constant(3), &[5, 50], 2, &settings)?;
    let at = |n: usize, i: usize| table.iter().find(|t| t.n == n && t.i == i).map(|t| t.distance).unwrap();
    // an MA(1) recursion has theta_{n,2} = 0 exactly, matching psi_2 = 0
    let pass = s50 < s5 && at(50, 1) < at(5, 1) && at(5, 2) <= 1e-12 && at(50, 2) <= 1e-12;
    Ok(Outcome::new(
        pass,
        format!(
            "scalar {s5:.2e} -> {s50:.2e}; D=3 i=1 {:.2e} -> {:.2e}, i=2 {:.2e} -> {:.2e}",
            at(5, 1),
            at(50, 1),
            at(5, 2),
            at(50, 2)
        ),
    ))
}

fn lemma_family(rng: &mut ChaCha8Rng) -> Vec<LinearProcessModel> {
    vec![
        scalar_ma1(0.5),
        LinearProcessModel::white_noise(random_noise(rng, 8)),
        random_fma(rng, 8, 1),
        random_fma(rng, 6, 2),
        random_far1(rng, 8),
        random_far1(rng, 5),
    ]
}

fn eigen_bound() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let settings = StudySettings::default();
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for model in lemma_family(&mut rng) {
        for d in 1..=model.dim() {
            let r = lemma_checks(&model, d, 1, 10, &settings)?;
            worst = worst.min(r.eigen_bound.slack);
            cases += 1;
        }
    }
    Ok(Outcome::new(
        worst >= 0.0,
        format!("{cases} (model, D) cases, smallest slack {worst:.2e}"),
    ))
}

fn block_spectrum() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let settings = StudySettings::default();
    let models = vec![
        scalar_ma1(0.5),
        LinearProcessModel::white_noise(random_noise(&mut rng, 3)),
        LinearProcessModel::fma(random_noise(&mut rng, 3), vec![random_operator(&mut rng, 3, 0.7)])?,
        random_far1(&mut rng, 3),
        random_far1(&mut rng, 2),
    ];
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for model in &models {
        for d in 1..=model.dim().min(3) {
            for n in 1..=10 {
                let r = lemma_checks(model, d, n, 0, &settings)?;
                worst = worst.min(r.block_spectrum.slack);
                cases += 1;
            }
        }
    }
    Ok(Outcome::new(
        worst >= 0.0,
        format!("{cases} (model, D, n) cases, smallest slack {worst:.2e}"),
    ))
}

fn spectral_duality() -> flip::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0_f64;
    for q in 1..=3 {
        for ambient in [1, 3] {
            let model = random_fma(&mut rng, ambient, q);
            let lagcovs = analytic_lag_covs(&model, q)?;
            let sd = spectral_density(&lagcovs, 512)?;
            let reach = (q + 2) as i64;
            for h in -reach..=reach {
                worst = worst.max(spectral_duality_check(&lagcovs, &sd, h)?);
            }
        }
    }
    Ok(Outcome::new(
        worst <= 1e-6,
        format!("FMA(1..3), 512-point grid, max error {worst:.2e} (tol 1e-6)"),
    ))
}

fn rate_family() -> flip::Result<Vec<(&'static str, LinearProcessModel, Schedule)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let noise = [1.0, 0.5, 0.25, 0.125];
    Ok(vec![
        (
            "diagonal FMA(1)",
            diagonal_ma1(&noise, &[0.97, 0.9, 0.8, 0.7]),
            Schedule::FloorSqrt { cap: 4 },
        ),
        (
            "dense FMA(1)",
            LinearProcessModel::fma(NoiseSpec::new(noise.to_vec())?, vec![random_operator(&mut rng, 4, 0.8)])?,
            Schedule::FloorSqrt { cap: 4 },
        ),
        (
            "dense FMA(1), random noise",
            LinearProcessModel::fma(random_noise(&mut rng, 4), vec![random_operator(&mut rng, 4, 0.6)])?,
            Schedule::FloorLog { cap: 4 },
        ),
    ])
}

fn rate_bound_trend() -> flip::Result<Outcome> {
    let start = Instant::now();
    let settings = StudySettings {
        seed: 11,
        ..StudySettings::default()
    };
    let n_list = [10, 50, 200];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, schedule) in rate_family()? {
        let means: Vec<f64> = excess_error_series(&model, &schedule, &n_list, &settings)?
            .iter()
            .map(|e| e.mean)
            .collect();
        let bounds: Vec<f64> = rate_bound_series(&model, &schedule, default_m_of_n, &n_list, &settings)?
            .iter()
            .map(|b| b.bound)
            .collect();
        let decreasing = means.windows(2).all(|w| w[1] < w[0]);
        let max_ratio = means.iter().zip(&bounds).map(|(m, b)| m / b).fold(0.0_f64, f64::max);
        pass &= decreasing && max_ratio <= RATE_CONSTANT;
        parts.push(format!(
            "{name}: means [{}] decreasing={decreasing}, max mean/bound {max_ratio:.2e}, LS fit {:.2e}",
            means.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>().join(", "),
            fit_rate_constant(&means, &bounds)
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 300.0;
    Ok(Outcome::new(
        pass,
        format!("K = {RATE_CONSTANT:.0e}; {}; {secs:.1}s (limit 300s)", parts.join("; ")),
    ))
}

const CLI_CONFIG: &str = r#"
[model]
kind = "fma"
D = 3
noise.eigenvalues = [1.0, 0.5, 0.25]
operators.gamma1 = [[0.5, 0.1, 0.0], [0.0, 0.4, 0.2], [0.1, 0.0, 0.3]]

[basis]
resolution = 64

[algorithm]
kind = "increasing"
schedule = "floor-log(3)"

[run]
n_max = 20
length = 25
mc_runs = 200
seed = 42
n_grid = [5, 10]
d_grid = [1, 3]
"#;

/// Exit code, stdout and `(relative path, contents)` for every file.
type Snapshot = (i32, Vec<u8>, Vec<(String, Vec<u8>)>);

/// Runs the binary and captures everything it leaves behind under `dir`.
fn cli_snapshot(dir: &Path, args: &[&str], threads: &str) -> Snapshot {
    let out = Command::new(env!("CARGO_BIN_EXE_flip"))
        .args(args)
        .current_dir(dir)
        .env("FLIP_THREADS", threads)
        .output()
        .expect("binary runs");
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in std::fs::read_dir(&p).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    (out.status.code().unwrap_or(-1), out.stdout, files)
}

fn cli_determinism() -> flip::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("exp.toml"), CLI_CONFIG)?;
    let commands: [&[&str]; 6] = [
        &["validate", "--config", "exp.toml"],
        &["simulate", "--config", "exp.toml", "--out", "traj.csv"],
        &[
            "predict",
            "--config",
            "exp.toml",
            "--trajectory",
            "traj.csv",
            "--out",
            "pred.csv",
            "--dump-state",
            "state.txt",
        ],
        &[
            "predict",
            "--config",
            "exp.toml",
            "--trajectory",
            "traj.csv",
            "--format",
            "table",
        ],
        &["study", "--config", "exp.toml", "--out-dir", "study"],
        &[
            "study",
            "--config",
            "exp.toml",
            "--out-dir",
            "study",
            "--format",
            "table",
            "--seed",
            "7",
        ],
    ];
    let mut mismatches = Vec::new();
    for args in commands {
        let first = cli_snapshot(dir.path(), args, "1");
        let second = cli_snapshot(dir.path(), args, "1");
        let threaded = cli_snapshot(dir.path(), args, "3");
        if first.0 != 0 {
            mismatches.push(format!("{} exited {}", args[0], first.0));
        }
        if first != second || first != threaded {
            mismatches.push(format!("{} differs between reruns", args.join(" ")));
        }
    }
    Ok(Outcome::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!(
                "{} commands byte-identical across reruns and thread counts",
                commands.len()
            )
        } else {
            mismatches.join("; ")
        },
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("oracle equivalence", oracle_equivalence),
        ("increasing-dimension oracle equivalence", increasing_oracle_equivalence),
        ("sparse moving-average recursion", fma_simplification),
        ("scalar MA(1) hand values", scalar_hand_values),
        ("error decomposition identity", decomposition_identity),
        ("noise-floor convergence", noise_floor_convergence_check),
        ("recursion coefficients approach MA coefficients", theta_to_psi),
        ("lag covariance eigenvalue bound", eigen_bound),
        ("block covariance spectrum bound", block_spectrum),
        ("spectral duality", spectral_duality),
        ("rate-bound trend", rate_bound_trend),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (index, (name, criterion)) in criteria.into_iter().enumerate() {
        let outcome = match panic::catch_unwind(AssertUnwindSafe(criterion)) {
            Ok(Ok(outcome)) => outcome,
            Ok(Err(e)) => Outcome::new(false, format!("error: {e}")),
            Err(_) => Outcome::new(false, "panicked"),
        };
        if !outcome.pass {
            failures += 1;
        }
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {}", index + 1, outcome.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
