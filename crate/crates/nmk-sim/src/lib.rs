//! Experiment driver for `nmk-core`.
//!
//! One JSON document describes the system, the baths and the numerical
//! parameters; the mode decides which artifacts are produced.

// `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod pipeline;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nmk_core::dynamics::ErrorBudget;
use nmk_core::fock::build_hamiltonian;
use nmk_core::linalg::{trace_distance, CMat};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{ExperimentConfig, Mode, Params, SchemaError};
use output::{fmt_f64, write_atomic, write_json};
use pipeline::{ChainRun, Setup};

pub const EXIT_IO: u8 = 1;
pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("numerical failure: {0}")]
    Numerical(#[from] nmk_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl SimError {
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Schema { .. } | SimError::Usage(_) => EXIT_SCHEMA,
            SimError::Numerical(_) => EXIT_NUMERICAL,
            SimError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

pub fn load_config(path: &Path, mode: Mode) -> Result<ExperimentConfig, SimError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let schema = |source| SimError::Schema { path: path.to_path_buf(), source };
    let config = ExperimentConfig::parse(&text).map_err(schema)?;
    config.validate(mode).map_err(schema)?;
    Ok(config)
}

/// Parses, validates and runs one document, writing artifacts into `out`.
/// Returns the paths written, in order.
pub fn run(mode: Mode, config_path: &Path, out: &Path, jobs: usize) -> Result<Vec<PathBuf>, SimError> {
    if jobs == 0 {
        return Err(SimError::Usage("--jobs must be at least 1".into()));
    }
    let config = load_config(config_path, mode)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let setup = Setup::new(config)?;
    log::info!("{mode}: {} output times, {} bath(s)", setup.times.len(), setup.kernels.len());
    match mode {
        Mode::ChainMap => chain_map(&setup, out),
        Mode::Simulate => simulate(&setup, out),
        Mode::Certify => certify(&setup, out),
        Mode::CompareOracle => compare_oracle(&setup, out),
        Mode::Sweep => sweep(&setup, out, jobs),
    }
}

fn save(path: PathBuf, bytes: io::Result<Vec<u8>>) -> Result<PathBuf, SimError> {
    let bytes = bytes.map_err(io_err(&path))?;
    write_atomic(&path, &bytes).map_err(io_err(&path))?;
    Ok(path)
}

fn save_json<T: Serialize>(path: PathBuf, value: &T) -> Result<PathBuf, SimError> {
    write_json(&path, value).map_err(io_err(&path))?;
    Ok(path)
}

#[derive(Serialize)]
struct ChainMapReport {
    omega_c: f64,
    n_modes: usize,
    epsilon: Option<f64>,
    baths: Vec<ChainReport>,
}

#[derive(Serialize)]
struct ChainReport {
    bath: usize,
    v_norm: f64,
    onsite: Vec<f64>,
    hopping: Vec<f64>,
}

fn chain_map(setup: &Setup, out: &Path) -> Result<Vec<PathBuf>, SimError> {
    let p = setup.config.base_params();
    let couplings = setup.couplings(&p)?;
    let chains = couplings
        .iter()
        .map(|c| nmk_core::chain::star_to_chain(c, p.omega_c, p.n_modes))
        .collect::<Result<Vec<_>, _>>()?;
    let report = ChainMapReport {
        omega_c: p.omega_c,
        n_modes: p.n_modes,
        epsilon: p.epsilon,
        baths: chains
            .iter()
            .enumerate()
            .map(|(bath, c)| ChainReport {
                bath,
                v_norm: c.v_norm,
                onsite: c.onsite.clone(),
                hopping: c.hopping.clone(),
            })
            .collect(),
    };
    let space = nmk_core::fock::enumerate_basis(setup.model.n, setup.model.d, setup.model.baths(), p.n_modes, p.cap)?;
    let h = build_hamiltonian(&setup.model, &chains, &space, 0.0)?;
    Ok(vec![
        save_json(out.join("chain.json"), &report)?,
        save(out.join("hamiltonian.mtx"), Ok(output::matrix_market(&h)))?,
    ])
}

fn simulate(setup: &Setup, out: &Path) -> Result<Vec<PathBuf>, SimError> {
    let run = setup.run_chain(&setup.config.base_params(), false)?;
    Ok(vec![save(out.join("trajectory.csv"), output::trajectory_csv(&run.trajectory))?])
}

fn max_trace_distance(a: &[CMat], b: &[CMat]) -> Result<Vec<f64>, SimError> {
    Ok(a.iter().zip(b).map(|(x, y)| trace_distance(x, y)).collect::<Result<Vec<_>, _>>()?)
}

#[derive(Serialize)]
struct Refinement {
    n_modes: usize,
    cap: usize,
    /// Largest reduced-state trace distance to the refined run over all
    /// output times; a lower bound on the state distance.
    max_trace_distance: f64,
}

#[derive(Serialize)]
struct CertifyReport {
    budget: ErrorBudget,
    refinement: Refinement,
    budget_dominates_refinement: bool,
}

fn certify(setup: &Setup, out: &Path) -> Result<Vec<PathBuf>, SimError> {
    let p = setup.config.base_params();
    let run = setup.run_chain(&p, false)?;
    let budget = setup.budget(&run)?;
    let fine = Params { n_modes: 2 * p.n_modes, cap: p.cap + 1, ..p };
    let refined = setup.run_chain(&fine, false)?;
    let gap = max_trace_distance(&run.trajectory.rho, &refined.trajectory.rho)?.into_iter().fold(0.0, f64::max);
    if gap > budget.total {
        log::warn!("refinement gap {gap:e} exceeds the certified total {:e}", budget.total);
    }
    let report = CertifyReport {
        budget,
        refinement: Refinement { n_modes: fine.n_modes, cap: fine.cap, max_trace_distance: gap },
        budget_dominates_refinement: budget.total >= gap,
    };
    Ok(vec![
        save(out.join("trajectory.csv"), output::trajectory_csv(&run.trajectory))?,
        save_json(out.join("budget.json"), &report)?,
    ])
}

#[derive(Serialize)]
struct OracleSummary {
    max_trace_distance: f64,
    final_trace_distance: f64,
}

fn compare_oracle(setup: &Setup, out: &Path) -> Result<Vec<PathBuf>, SimError> {
    let p = setup.config.base_params();
    let run = setup.run_chain(&p, false)?;
    let oracle = setup.run_oracle(&p)?;
    let d = max_trace_distance(&run.trajectory.rho, &oracle)?;
    let summary = OracleSummary {
        max_trace_distance: d.iter().copied().fold(0.0, f64::max),
        final_trace_distance: *d.last().unwrap_or(&0.0),
    };
    log::info!("max trace distance to the oracle: {:e}", summary.max_trace_distance);
    Ok(vec![
        save(out.join("comparison.csv"), output::comparison_csv(&setup.times, &run.trajectory.rho, &oracle, &d))?,
        save_json(out.join("summary.json"), &summary)?,
    ])
}

struct PointResult {
    run: ChainRun,
    budget: ErrorBudget,
}

/// Finest setting on every axis.
fn reference_index(grid: &[Params]) -> usize {
    let key = |p: &Params| (p.epsilon.map(|e| -e), p.omega_c, p.n_modes, p.cap);
    let mut best = 0;
    for (k, p) in grid.iter().enumerate() {
        let (a, b) = (key(p), key(&grid[best]));
        if a.0.partial_cmp(&b.0).is_some_and(|o| o.is_ge()) && a.1 >= b.1 && a.2 >= b.2 && a.3 >= b.3 {
            best = k;
        }
    }
    best
}

fn sweep(setup: &Setup, out: &Path, jobs: usize) -> Result<Vec<PathBuf>, SimError> {
    let grid = setup.config.grid();
    let points_dir = out.join("points");
    fs::create_dir_all(&points_dir).map_err(io_err(&points_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    log::info!("sweep over {} points with {jobs} job(s)", grid.len());
    let results: Vec<Result<(PointResult, PathBuf), SimError>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(k, p)| {
                let run = setup.run_chain(p, false)?;
                let budget = setup.budget(&run)?;
                let path = save(points_dir.join(format!("point_{k:04}.csv")), output::trajectory_csv(&run.trajectory))?;
                log::debug!("point {k} done: total budget {:e}", budget.total);
                Ok((PointResult { run, budget }, path))
            })
            .collect()
    });
    let mut points = Vec::with_capacity(results.len());
    let mut written = Vec::with_capacity(results.len() + 1);
    for r in results {
        let (point, path) = r?;
        points.push(point);
        written.push(path);
    }
    let reference = reference_index(&grid);
    let reference_rho = &points[reference].run.trajectory.rho;
    let mut rows = Vec::with_capacity(points.len());
    for (k, pt) in points.iter().enumerate() {
        let measured = max_trace_distance(&pt.run.trajectory.rho, reference_rho)?.into_iter().fold(0.0, f64::max);
        let b = &pt.budget;
        let p = &pt.run.params;
        rows.push(vec![
            k.to_string(),
            fmt_f64(p.epsilon.unwrap_or(f64::NAN)),
            fmt_f64(p.omega_c),
            p.n_modes.to_string(),
            p.cap.to_string(),
            (k == reference).to_string(),
            fmt_f64(measured),
            fmt_f64(b.total),
            fmt_f64(b.regularization),
            fmt_f64(b.cutoff),
            fmt_f64(b.chain),
            fmt_f64(b.truncation),
            fmt_f64(b.initialization),
        ]);
    }
    let header = [
        "point",
        "epsilon",
        "omega_c",
        "n_modes",
        "cap",
        "reference",
        "measured_trace_distance",
        "certified_total",
        "regularization",
        "cutoff",
        "chain",
        "truncation",
        "initialization",
    ];
    written.push(save(out.join("sweep.csv"), output::table_csv(&header, &rows))?);
    Ok(written)
}
