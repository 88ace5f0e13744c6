//! Command-line front end: run experiments from TOML configs, compare the
//! byte cost of written traces, and check the compression contracts.
//!
//! Exit codes: 0 on success, 1 when the input fails validation (bad flags,
//! bad config, malformed comparison CSV), 2 when a run fails at runtime
//! (missing data file, solver failure, failed contract check).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use newton3pc::compress::{standard_contractive_suite, standard_three_pc_suite};
use newton3pc::experiment::{
    compare_runs, read_trace_csv, run_experiment, validate_config, write_rows_csv, DataSource,
    ExperimentConfig, RunError,
};
use newton3pc::simnet::RngStream;
use newton3pc::solver::TraceRow;

#[derive(Parser)]
#[command(name = "n3pc", version, about = "Newton-type distributed optimization with compressed Hessian communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; writes `<name>.csv` and `<name>.summary.txt`.
    Run {
        /// Path to the TOML experiment config.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the bytes-to-gap comparison table for written trace CSVs.
    Compare {
        /// Trace CSV files, one per run.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Check every compressor's contract on random instances.
    VerifyCompressors {
        /// Trials per compressor and dimension.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Run a quick end-to-end check on synthetic data.
    Selftest,
}

const EXIT_INVALID: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INVALID,
            };
            e.print().expect("writing the usage error cannot fail");
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out.as_deref()),
        Command::Compare { csv } => cmd_compare(&csv),
        Command::VerifyCompressors { trials } => cmd_verify(trials),
        Command::Selftest => cmd_selftest(),
    };
    ExitCode::from(code)
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> u8 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return EXIT_RUNTIME;
        }
    };
    let mut config = match validate_config(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: invalid config {}:\n{e}", config_path.display());
            return EXIT_INVALID;
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    anchor_dataset_path(&mut config, config_path);
    let run_name = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());

    match run_experiment(&config, &run_name, out) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let Some(path) = &outcome.csv_path {
                println!("trace written to {}", path.display());
            }
            if outcome.trace.failure.is_some() {
                EXIT_RUNTIME
            } else {
                0
            }
        }
        Err(e @ RunError::Build(_)) => {
            eprintln!("error: config does not fit the problem: {e}");
            EXIT_INVALID
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// A dataset path in a config is relative to the config file, not to wherever
/// the tool happens to run.
fn anchor_dataset_path(config: &mut ExperimentConfig, config_path: &Path) {
    if let DataSource::Libsvm { path, .. } = &mut config.problem.source {
        if path.is_relative() {
            if let Some(parent) = config_path.parent() {
                *path = parent.join(&path);
            }
        }
    }
}

fn cmd_compare(files: &[PathBuf]) -> u8 {
    let mut runs: Vec<(String, Vec<TraceRow>)> = Vec::with_capacity(files.len());
    for file in files {
        let text = match std::fs::read_to_string(file) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", file.display());
                return EXIT_RUNTIME;
            }
        };
        let rows = match read_trace_csv(&text) {
            Ok(rows) => rows,
            Err(e) => {
                eprintln!("error: {}: {e}", file.display());
                return EXIT_INVALID;
            }
        };
        let label = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        runs.push((label, rows));
    }
    print!("{}", compare_runs(&runs));
    0
}

fn cmd_verify(trials: usize) -> u8 {
    if trials < 2 {
        eprintln!("error: --trials must be at least 2");
        return EXIT_INVALID;
    }
    let mut rng = RngStream::new(0xC0DEC);
    let mut all_pass = true;
    for d in [3usize, 10] {
        println!("dimension {d}, {trials} trials per check");
        for report in standard_contractive_suite(d, trials, &mut rng) {
            all_pass &= report.pass;
            println!("  {report}");
        }
        for report in standard_three_pc_suite(d, trials, &mut rng) {
            all_pass &= report.pass;
            println!("  {report}");
        }
    }
    if all_pass {
        println!("all contracts hold");
        0
    } else {
        println!("CONTRACT VIOLATIONS FOUND");
        EXIT_RUNTIME
    }
}

const SELFTEST_BASE: &str = r#"
seed = 11
gap_target = 1e-9

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
max_iter = 60
"#;

fn selftest_config(solver_lines: &str) -> ExperimentConfig {
    let text = format!("{SELFTEST_BASE}{solver_lines}");
    validate_config(&text).expect("selftest configs are fixed and valid")
}

fn cmd_selftest() -> u8 {
    let mut failures = 0usize;
    let mut check = |name: &str, outcome: Result<(), String>| match outcome {
        Ok(()) => println!("selftest {name}: ok"),
        Err(why) => {
            println!("selftest {name}: FAILED: {why}");
            failures += 1;
        }
    };

    check("compression contracts (d=3, 200 trials)", {
        let mut rng = RngStream::new(0x5e1f);
        let bad: Vec<String> = standard_contractive_suite(3, 200, &mut rng)
            .iter()
            .map(|r| (r.pass, r.to_string()))
            .chain(standard_three_pc_suite(3, 200, &mut rng).iter().map(|r| (r.pass, r.to_string())))
            .filter(|(pass, _)| !pass)
            .map(|(_, line)| line)
            .collect();
        if bad.is_empty() { Ok(()) } else { Err(bad.join("; ")) }
    });

    let newton = selftest_config(
        "kind = \"newton\"\nstep = \"eigen_floor\"\n[solver.hessian]\nmechanism = \"identity\"\n",
    );
    let newton_out = run_experiment(&newton, "selftest-newton", None);
    check("dense Newton reaches the gap target", {
        match &newton_out {
            Ok(out) if out.trace.failure.is_none() && out.trace.reached(1e-9) => Ok(()),
            Ok(out) => Err(format!("final gap {:?}, failure {:?}", out.trace.final_gap(), out.trace.failure)),
            Err(e) => Err(e.to_string()),
        }
    });

    check("compressed Hessians reach the gap target", {
        let config = selftest_config(
            "kind = \"newton\"\nstep = \"eigen_floor\"\n[solver.hessian]\nmechanism = \"ef21\"\n[solver.hessian.inner]\nkind = \"top_k\"\nk = 20\n",
        );
        match run_experiment(&config, "selftest-ef21", None) {
            Ok(out) if out.trace.failure.is_none() && out.trace.reached(1e-9) => Ok(()),
            Ok(out) => Err(format!("final gap {:?}, failure {:?}", out.trace.final_gap(), out.trace.failure)),
            Err(e) => Err(e.to_string()),
        }
    });

    check("bidirectional with a dense master matches dense Newton", {
        let config = selftest_config(
            "kind = \"bidirectional\"\n[solver.hessian]\nmechanism = \"identity\"\n[solver.master]\nmechanism = \"identity\"\n",
        );
        match (&newton_out, run_experiment(&config, "selftest-bc", None)) {
            (Ok(a), Ok(b)) => {
                let gaps = |t: &newton3pc::solver::RunTrace| {
                    t.rows.iter().map(|r| r.f_gap.to_bits()).collect::<Vec<_>>()
                };
                if gaps(&a.trace) == gaps(&b.trace) {
                    Ok(())
                } else {
                    Err("objective-gap columns differ".to_string())
                }
            }
            (_, Err(e)) => Err(e.to_string()),
            (Err(e), _) => Err(format!("newton baseline failed: {e}")),
        }
    });

    check("partial participation reaches the gap target", {
        let config = selftest_config(
            "kind = \"partial_participation\"\ntau = 2\n[solver.hessian]\nmechanism = \"ef21\"\n[solver.hessian.inner]\nkind = \"top_k\"\nk = 20\n[solver.master]\nmechanism = \"identity\"\n",
        );
        match run_experiment(&config, "selftest-pp", None) {
            Ok(out) if out.trace.failure.is_none() && out.trace.reached(1e-9) => Ok(()),
            Ok(out) => Err(format!("final gap {:?}, failure {:?}", out.trace.final_gap(), out.trace.failure)),
            Err(e) => Err(e.to_string()),
        }
    });

    check("rerun with the same seed reproduces the trace bitwise", {
        let config = selftest_config(
            "kind = \"newton\"\nstep = \"eigen_floor\"\n[solver.hessian]\nmechanism = \"cbag\"\np = 0.5\n[solver.hessian.inner]\nkind = \"rand_k\"\nk = 20\n",
        );
        let a = run_experiment(&config, "selftest-det", None);
        let b = run_experiment(&config, "selftest-det", None);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let a_csv = write_rows_csv(&a.trace.rows, 1);
                if a_csv == write_rows_csv(&b.trace.rows, 1) {
                    match read_trace_csv(&a_csv) {
                        Ok(rows) if rows.len() == a.trace.rows.len() => Ok(()),
                        Ok(rows) => Err(format!("round trip lost rows: {} of {}", rows.len(), a.trace.rows.len())),
                        Err(e) => Err(e.to_string()),
                    }
                } else {
                    Err("traces differ between identical runs".to_string())
                }
            }
            (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
        }
    });

    if failures == 0 {
        println!("selftest: all checks passed");
        0
    } else {
        println!("selftest: {failures} check(s) failed");
        EXIT_RUNTIME
    }
}
