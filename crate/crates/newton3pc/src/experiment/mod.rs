//! End-to-end experiment runs: a validated config goes in, a per-iteration
//! CSV trace and a text summary come out.
//!
//! The reference solution `(x*, f*)` that all gap metrics are measured
//! against is expensive relative to the runs themselves, so it is cached on
//! disk keyed by a content hash of the fully built problem (loss kind, data,
//! regularizer, sharding). Any change to the inputs changes the key.

mod config;
mod csvio;

pub use config::{
    validate_config, CompressorConfig, ConfigError, DataSource, ExperimentConfig, H0Config,
    MechanismConfig, ProblemConfig, ProblemKindConfig, SolverConfigSection, SolverKindConfig, X0Config,
};
pub use csvio::{compare_runs, read_trace_csv, write_rows_csv, CsvError, CSV_HEADER, GAP_LEVELS};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::compress::{random_orthogonal, ContractiveSpec, Shape, SpecError, ThreePcSpec};
use crate::dataio::{read_libsvm, shuffle_split, ParseError, SplitError};
use crate::linalg::Vector;
use crate::objective::{gen_synthetic, Problem};
use crate::simnet::{Network, RngStream};
use crate::solver::{
    self, default_ls_grid, H0Mode, Reference, RunTrace, SolverConfig, SolverError, SolverKind,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("dataset: {0}")]
    Data(#[from] ParseError),
    #[error("data split: {0}")]
    Split(#[from] SplitError),
    #[error("reference solve: {0}")]
    Reference(#[from] SolverError),
    /// The config is self-consistent but does not fit the built problem
    /// (wrong x0 length, compressor budget beyond the entry count).
    #[error("{0}")]
    Build(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one run produces. `trace.failure` carries solver-side runtime
/// errors; the rows collected up to that point are kept and written.
#[derive(Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub reference: Reference,
    pub summary: String,
    pub csv_path: Option<PathBuf>,
}

/// Runs one experiment. When `out_dir` (or the config's `output`) names a
/// directory, the trace CSV and the summary are written there as
/// `<run_name>.csv` and `<run_name>.summary.txt`, and the reference cache
/// lives in its `xstar-cache/` subdirectory. With no output directory the run
/// is purely in-memory and the reference is recomputed.
pub fn run_experiment(
    config: &ExperimentConfig,
    run_name: &str,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    let root = RngStream::new(config.seed);
    let out_dir: Option<PathBuf> = out_dir.map(Path::to_path_buf).or_else(|| config.output.clone());
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)?;
    }

    let problem = build_problem(&config.problem, config.seed, &root)?;
    let reference = cached_reference(&problem, out_dir.as_deref())?;
    let solver_config = build_solver(&config.solver, config.gap_target, &problem, &root)?;

    let mut net = Network::new(problem.n_devices());
    let trace = solver::run(&problem, &solver_config, &reference, &mut net, &root);

    let summary = render_summary(config, run_name, &problem, &solver_config, &reference, &trace);
    let csv_path = match &out_dir {
        Some(dir) => {
            let csv_path = dir.join(format!("{run_name}.csv"));
            fs::write(&csv_path, write_rows_csv(&trace.rows, config.record_every))?;
            fs::write(dir.join(format!("{run_name}.summary.txt")), &summary)?;
            Some(csv_path)
        }
        None => None,
    };

    Ok(RunOutcome { trace, reference, summary, csv_path })
}

fn build_problem(cfg: &ProblemConfig, seed: u64, root: &RngStream) -> Result<Problem, RunError> {
    match &cfg.source {
        DataSource::Synthetic { alpha, beta, d, points_per_device } => {
            Ok(gen_synthetic(*alpha, *beta, *d, cfg.n_devices, *points_per_device, seed, cfg.lambda))
        }
        DataSource::Libsvm { path, dim } => {
            let data = read_libsvm(path, *dim)?;
            let shards = shuffle_split(&data, cfg.n_devices, &mut root.split("data-shuffle", 0))?;
            Ok(match cfg.kind {
                ProblemKindConfig::LogReg => Problem::logreg(shards, cfg.lambda),
                ProblemKindConfig::Softmax { sigma, shift } => {
                    let mut p = Problem::softmax(shards, cfg.lambda, sigma);
                    if shift {
                        p.shift_softmax_data();
                    }
                    p
                }
            })
        }
    }
}

fn build_solver(
    cfg: &SolverConfigSection,
    gap_target: Option<f64>,
    problem: &Problem,
    root: &RngStream,
) -> Result<SolverConfig, RunError> {
    let d = problem.dim();
    let x0 = match &cfg.x0 {
        X0Config::Zeros => Vector::zeros(d),
        X0Config::Fill(v) => Vector::from_element(d, *v),
        X0Config::Explicit(vals) => {
            if vals.len() != d {
                return Err(RunError::Build(format!(
                    "solver.x0: has {} entries, the problem dimension is {d}",
                    vals.len()
                )));
            }
            Vector::from_column_slice(vals)
        }
    };

    let hessian_3pc = match (&cfg.kind, &cfg.hessian) {
        (SolverKindConfig::ExactNewton, None) => ThreePcSpec::identity(Shape::Matrix { d })
            .map_err(|e| RunError::Build(format!("solver.hessian: {e}")))?,
        (_, Some(mech)) => {
            build_mechanism(mech, Shape::Matrix { d }, &mut root.split("rotation-basis", 0))
                .map_err(|e| RunError::Build(format!("solver.hessian: {e}")))?
        }
        (_, None) => unreachable!("validation requires the hessian table"),
    };
    let master_3pc = cfg
        .master
        .as_ref()
        .map(|mech| build_mechanism(mech, Shape::Vector { d }, &mut root.split("rotation-basis", 1)))
        .transpose()
        .map_err(|e| RunError::Build(format!("solver.master: {e}")))?;

    let kind = match cfg.kind {
        SolverKindConfig::Newton { step } => SolverKind::Newton { step },
        SolverKindConfig::Bidirectional => SolverKind::Bidirectional,
        SolverKindConfig::PartialParticipation { tau } => SolverKind::PartialParticipation { tau },
        SolverKindConfig::CubicReg => SolverKind::CubicReg,
        SolverKindConfig::LineSearch => SolverKind::LineSearch,
        SolverKindConfig::ExactNewton => SolverKind::ExactNewton,
    };

    Ok(SolverConfig {
        kind,
        hessian_3pc,
        master_3pc,
        grad_p: cfg.grad_p,
        mu: cfg.mu,
        cubic_m: cfg.cubic_m,
        ls_grid: cfg.ls_grid.clone().unwrap_or_else(default_ls_grid),
        max_iter: cfg.max_iter,
        gap_target,
        x0,
        h0: match cfg.h0 {
            H0Config::Exact => H0Mode::ExactAtX0,
            H0Config::Zero => H0Mode::Zero,
        },
        track_key_relation: cfg.track_key_relation,
    })
}

fn build_contractive(cfg: &CompressorConfig, shape: Shape) -> Result<ContractiveSpec, SpecError> {
    match *cfg {
        CompressorConfig::TopK { k } => ContractiveSpec::top_k(k, shape),
        CompressorConfig::RankR { r } => ContractiveSpec::rank_r(r, shape.dim()),
        CompressorConfig::RandK { k, scaled } => ContractiveSpec::rand_k(k, scaled, shape),
        CompressorConfig::AdaptiveThreshold { threshold } => {
            ContractiveSpec::adaptive_threshold(threshold, shape)
        }
        CompressorConfig::Identity => ContractiveSpec::identity(shape),
    }
}

fn build_mechanism(
    cfg: &MechanismConfig,
    shape: Shape,
    basis_rng: &mut RngStream,
) -> Result<ThreePcSpec, SpecError> {
    match cfg {
        MechanismConfig::Ef21 { inner } => ThreePcSpec::ef21(build_contractive(inner, shape)?),
        MechanismConfig::Lag { zeta } => ThreePcSpec::lag(*zeta, shape),
        MechanismConfig::Clag { inner, zeta, s } => {
            ThreePcSpec::clag(build_contractive(inner, shape)?, *zeta, *s)
        }
        MechanismConfig::Cbag { inner, p, s } => {
            ThreePcSpec::cbag(build_contractive(inner, shape)?, *p, *s)
        }
        MechanismConfig::AdaptiveTopK { d0 } => ThreePcSpec::adaptive_top_k(*d0, shape),
        MechanismConfig::Rotation { inner } => {
            let q = random_orthogonal(shape.dim(), basis_rng);
            ThreePcSpec::rotation(build_contractive(inner, shape)?, q)
        }
        MechanismConfig::Identity => ThreePcSpec::identity(shape),
    }
}

/// Content hash of a fully built problem: loss kind and constants, device
/// count, and every shard's data bytes in storage order.
fn problem_hash(problem: &Problem) -> String {
    let mut h = Sha256::new();
    match problem.kind() {
        crate::objective::ProblemKind::LogReg => {
            h.update([0u8]);
            h.update(0f64.to_le_bytes());
        }
        crate::objective::ProblemKind::Softmax { sigma } => {
            h.update([1u8]);
            h.update(sigma.to_le_bytes());
        }
    }
    h.update(problem.lambda().to_le_bytes());
    h.update((problem.n_devices() as u64).to_le_bytes());
    for dev in problem.devices() {
        h.update((dev.a.nrows() as u64).to_le_bytes());
        h.update((dev.a.ncols() as u64).to_le_bytes());
        for v in dev.a.iter() {
            h.update(v.to_le_bytes());
        }
        for v in dev.b.iter() {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(32);
    for byte in &digest[..16] {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

const REFERENCE_NEWTON_ITERS: usize = 60;

/// Returns the reference solution, reading it from `<out_dir>/xstar-cache/`
/// when a valid entry for this exact problem exists and writing one after a
/// fresh solve. The file holds the raw little-endian bits of `x*` and `f*`,
/// so a cache hit reproduces the computed reference bitwise.
fn cached_reference(problem: &Problem, out_dir: Option<&Path>) -> Result<Reference, RunError> {
    let entry = out_dir.map(|dir| dir.join("xstar-cache").join(format!("{}.ref", problem_hash(problem))));
    if let Some(path) = &entry {
        if let Some(reference) = load_reference(path, problem.dim()) {
            return Ok(reference);
        }
    }
    let reference = solver::solve_reference(problem, &Vector::zeros(problem.dim()), REFERENCE_NEWTON_ITERS)?;
    if let Some(path) = &entry {
        fs::create_dir_all(path.parent().expect("cache entry has a parent directory"))?;
        fs::write(path, encode_reference(&reference))?;
    }
    Ok(reference)
}

fn encode_reference(reference: &Reference) -> Vec<u8> {
    let d = reference.x_star.len();
    let mut bytes = Vec::with_capacity(8 * (d + 2));
    bytes.extend_from_slice(&(d as u64).to_le_bytes());
    for v in reference.x_star.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&reference.f_star.to_le_bytes());
    bytes
}

fn load_reference(path: &Path, d: usize) -> Option<Reference> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() != 8 * (d + 2) {
        return None;
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * (i + 1)].try_into().expect("8-byte slice") };
    if u64::from_le_bytes(word(0)) != d as u64 {
        return None;
    }
    let x_star = Vector::from_iterator(d, (0..d).map(|i| f64::from_le_bytes(word(i + 1))));
    let f_star = f64::from_le_bytes(word(d + 1));
    Some(Reference::new(x_star, f_star))
}

fn render_summary(
    config: &ExperimentConfig,
    run_name: &str,
    problem: &Problem,
    solver_config: &SolverConfig,
    reference: &Reference,
    trace: &RunTrace,
) -> String {
    let n = problem.n_devices() as u64;
    let mut s = String::new();
    let mut line = |text: String| {
        s.push_str(&text);
        s.push('\n');
    };

    line(format!("run {run_name}: {}", config.solver.kind));
    line(format!("hessian mechanism: {}", solver_config.hessian_3pc.label()));
    if let Some(master) = &solver_config.master_3pc {
        line(format!("master mechanism: {}", master.label()));
    }
    let kind = match problem.kind() {
        crate::objective::ProblemKind::LogReg => "logreg".to_string(),
        crate::objective::ProblemKind::Softmax { sigma } => format!("softmax(sigma={sigma})"),
    };
    let points: usize = problem.devices().iter().map(|d| d.points()).sum();
    line(format!(
        "problem: {kind}, lambda {}, {} devices, dimension {}, {points} data points",
        problem.lambda(),
        problem.n_devices(),
        problem.dim()
    ));
    line(format!("seed {}, max_iter {}", config.seed, solver_config.max_iter));
    line(format!("reference objective f* = {}", reference.f_star));

    match (&trace.failure, trace.last_row()) {
        (Some(why), _) => line(format!("status: FAILED: {why} (partial trace retained)")),
        (None, Some(row)) => line(format!(
            "status: finished at iteration {} with gap {:.3e}, distance² {:.3e}",
            row.iter, row.f_gap, row.dist_sq
        )),
        (None, None) => line("status: no iterations recorded".to_string()),
    }
    if let Some(residual) = trace.key_relation_residual {
        line(format!("largest gradient-bookkeeping residual: {residual:.3e}"));
    }

    if let Some(row) = trace.last_row() {
        line(format!(
            "traffic: uplink {} bytes ({} per device), downlink {} bytes ({} per device)",
            row.bytes_up_cum,
            row.bytes_up_cum / n,
            row.bytes_down_cum,
            row.bytes_down_cum / n
        ));
        line(format!(
            "computation: {} hessians, {} gradients evaluated device-side",
            row.hessians_computed_cum, row.grads_computed_cum
        ));
    }
    match config.gap_target {
        Some(target) => match trace.bytes_to_gap(target) {
            Some((up, down)) => line(format!(
                "bytes to gap {target:.0e}: uplink {up} ({} per device), downlink {down} ({} per device)",
                up / n,
                down / n
            )),
            None => line(format!("bytes to gap {target:.0e}: not reached")),
        },
        None => {}
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config(extra_solver: &str) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 7
gap_target = 1e-10

[problem]
kind = "logreg"
lambda = 1e-3
n_devices = 4

[problem.synthetic]
alpha = 0.4
beta = 0.6
d = 10
points_per_device = 30

[solver]
kind = "newton"
step = "eigen_floor"
max_iter = 40
{extra_solver}

[solver.hessian]
mechanism = "ef21"

[solver.hessian.inner]
kind = "top_k"
k = 25
"#
        );
        validate_config(&text).unwrap()
    }

    #[test]
    fn synthetic_run_converges_and_reruns_bitwise_identically() {
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic_config("");

        let first = run_experiment(&config, "trial", Some(dir.path())).unwrap();
        assert!(first.trace.failure.is_none(), "run failed: {:?}", first.trace.failure);
        assert!(first.trace.reached(1e-10), "final gap {:?}", first.trace.final_gap());
        let csv_path = first.csv_path.clone().unwrap();
        let first_csv = fs::read(&csv_path).unwrap();
        let cache_dir = dir.path().join("xstar-cache");
        assert_eq!(
            fs::read_dir(&cache_dir).unwrap().count(),
            1,
            "the reference solve must leave one cache entry"
        );

        let second = run_experiment(&config, "trial", Some(dir.path())).unwrap();
        assert_eq!(fs::read(&csv_path).unwrap(), first_csv, "same config and seed must rewrite the same bytes");
        assert_eq!(second.summary, first.summary);
        assert_eq!(second.reference, first.reference, "cached reference must reproduce the solve bitwise");

        let rows = read_trace_csv(std::str::from_utf8(&first_csv).unwrap()).unwrap();
        assert_eq!(rows.len(), first.trace.rows.len());
        assert_eq!(rows.last().unwrap(), first.trace.last_row().unwrap());
    }

    #[test]
    fn different_seeds_give_different_traces() {
        let mut config = synthetic_config("");
        let a = run_experiment(&config, "a", None).unwrap();
        config.seed = 8;
        let b = run_experiment(&config, "b", None).unwrap();
        assert_ne!(
            a.trace.last_row().unwrap().f_gap,
            b.trace.last_row().unwrap().f_gap,
            "different seeds shuffle different synthetic data"
        );
    }

    #[test]
    fn exact_newton_baseline_reaches_tight_gap_unmetered() {
        let text = r#"
seed = 3
gap_target = 1e-12

[problem]
kind = "logreg"
lambda = 1e-3
n_devices = 4

[problem.synthetic]
alpha = 0.4
beta = 0.6
d = 10
points_per_device = 30

[solver]
kind = "exact_newton"
max_iter = 20
"#;
        let config = validate_config(text).unwrap();
        let out = run_experiment(&config, "exact", None).unwrap();
        assert!(out.trace.reached(1e-12), "final gap {:?}", out.trace.final_gap());
        let last = out.trace.last_row().unwrap();
        assert_eq!(last.bytes_up_cum, 0, "the baseline is not metered");
        assert!(last.iter <= 20);
        assert!(out.summary.contains("status: finished"));
    }

    #[test]
    fn explicit_x0_of_wrong_length_is_a_build_error() {
        let config = synthetic_config("x0 = [1.0, 2.0]");
        let err = run_experiment(&config, "bad", None).unwrap_err();
        assert!(
            matches!(&err, RunError::Build(msg) if msg.contains("solver.x0")),
            "got {err:?}"
        );
    }

    #[test]
    fn oversized_compressor_budget_is_a_build_error() {
        let mut config = synthetic_config("");
        config.solver.hessian = Some(MechanismConfig::Ef21 { inner: CompressorConfig::TopK { k: 101 } });
        let err = run_experiment(&config, "bad", None).unwrap_err();
        assert!(
            matches!(&err, RunError::Build(msg) if msg.contains("solver.hessian")),
            "got {err:?}"
        );
    }

    #[test]
    fn missing_dataset_file_is_a_data_error() {
        let mut config = synthetic_config("");
        config.problem.source =
            DataSource::Libsvm { path: PathBuf::from("/nonexistent/data.svm"), dim: None };
        let err = run_experiment(&config, "bad", None).unwrap_err();
        assert!(matches!(err, RunError::Data(_)), "got {err:?}");
    }

    #[test]
    fn reference_cache_encoding_roundtrips_bitwise() {
        let reference = Reference::new(Vector::from_column_slice(&[0.1, -2.5e-17, 3.0]), -0.75);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("entry.ref");
        fs::write(&path, encode_reference(&reference)).unwrap();
        let back = load_reference(&path, 3).expect("entry must load");
        assert_eq!(back, reference);
        assert!(load_reference(&path, 4).is_none(), "dimension mismatch must miss the cache");
    }

    #[test]
    fn record_every_thins_the_written_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = synthetic_config("");
        config.record_every = 5;
        config.gap_target = None;
        let out = run_experiment(&config, "thin", Some(dir.path())).unwrap();
        let text = fs::read_to_string(out.csv_path.unwrap()).unwrap();
        let rows = read_trace_csv(&text).unwrap();
        let full_rows = &out.trace.rows;
        assert!(rows.len() < full_rows.len());
        for row in &rows[..rows.len() - 1] {
            assert_eq!(row.iter % 5, 0, "thinned rows sit on the record_every grid");
        }
        assert_eq!(rows.last(), full_rows.last(), "the final row is always written");
    }
}
