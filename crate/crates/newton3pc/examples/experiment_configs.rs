//! The config-driven experiment pipeline, end to end.
//!
//! A TOML document describes the problem, the solver, and the run controls;
//! validation reports every problem at once with its path; the run writes a
//! per-iteration CSV and a summary, caches the reference solution on disk,
//! and reruns are byte-identical. The same machinery backs the `n3pc` binary.

use newton3pc::experiment::{compare_runs, read_trace_csv, run_experiment, validate_config};

const CONFIG: &str = r#"
seed = 31
gap_target = 1e-10

[problem]
kind = "logreg"
lambda = 1e-3
n_devices = 6

[problem.synthetic]
alpha = 0.5
beta = 0.5
d = 15
points_per_device = 40

[solver]
kind = "newton"
step = "eigen_floor"
max_iter = 80

[solver.hessian]
mechanism = "ef21"

[solver.hessian.inner]
kind = "rank_r"
r = 1
"#;

fn main() {
    // Validation collects everything wrong in one pass.
    let broken = CONFIG.replace("lambda = 1e-3", "lambda = -1.0").replace("mechanism = \"ef21\"", "mechanism = \"cbag\"");
    let errors = validate_config(&broken).unwrap_err();
    println!("a broken config is rejected with every error at once:");
    for line in errors.to_string().lines() {
        println!("  {line}");
    }

    let config = validate_config(CONFIG).unwrap();
    let dir = std::env::temp_dir().join("n3pc-experiment-example");

    let rank1 = run_experiment(&config, "rank1", Some(&dir)).unwrap();
    println!("\n{}", rank1.summary);

    // Second run with a denser compressor, same problem: the reference is a
    // cache hit this time.
    let mut dense_cfg = validate_config(&CONFIG.replace("kind = \"rank_r\"\nr = 1", "kind = \"identity\"")).unwrap();
    dense_cfg.seed = config.seed;
    let dense = run_experiment(&dense_cfg, "dense", Some(&dir)).unwrap();
    assert_eq!(dense.reference, rank1.reference, "same problem, same cached reference");

    let rerun = run_experiment(&config, "rank1", Some(&dir)).unwrap();
    assert_eq!(rerun.summary, rank1.summary, "reruns are deterministic");

    let load = |outcome: &newton3pc::experiment::RunOutcome| {
        let text = std::fs::read_to_string(outcome.csv_path.as_ref().unwrap()).unwrap();
        read_trace_csv(&text).unwrap()
    };
    let table = compare_runs(&[("rank1".to_string(), load(&rank1)), ("dense".to_string(), load(&dense))]);
    println!("bytes moved to reach each gap level:\n{table}");
}
