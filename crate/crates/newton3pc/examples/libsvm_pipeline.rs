//! From a LibSVM file to device shards to a solved problem.
//!
//! Parses LibSVM text (sparse `label idx:val ...` rows, 1-based indices,
//! `#` comments), shuffles the rows with a seeded stream, deals equal
//! contiguous shards to the devices, and solves the resulting regularized
//! logistic regression. The text here comes from the built-in fixture
//! generator; point `read_libsvm` at a real file for the same flow.

use newton3pc::dataio::{parse_libsvm, shuffle_split, synthetic_libsvm_text};
use newton3pc::objective::Problem;
use newton3pc::simnet::RngStream;
use newton3pc::solver::run_exact_newton;
use newton3pc::Vector;

fn main() {
    let text = synthetic_libsvm_text(600, 40, 8, 0.05, 77);
    println!("first two rows of the input:");
    for line in text.lines().take(2) {
        println!("  {line}");
    }

    let data = parse_libsvm(&text, None).unwrap();
    println!("\nparsed {} rows, feature dimension {}", data.len(), data.dim);

    let n = 8;
    let root = RngStream::new(123);
    let shards = shuffle_split(&data, n, &mut root.split("data-shuffle", 0)).unwrap();
    let sizes: Vec<usize> = shards.iter().map(|s| s.points()).collect();
    println!("dealt {n} shards of {} rows each ({} rows dropped to even out)", sizes[0], data.len() - sizes.iter().sum::<usize>());

    let problem = Problem::logreg(shards, 1e-3);
    let (x_star, f_star, trace) = run_exact_newton(&problem, &Vector::zeros(problem.dim()), 50).unwrap();
    println!(
        "\nsolved: f* = {f_star:.10} in {} Newton iterations, ‖x*‖ = {:.4}",
        trace.rows.len() - 1,
        x_star.norm()
    );

    let accuracy: f64 = {
        let mut hits = 0usize;
        let mut total = 0usize;
        for dev in problem.devices() {
            for (row, &label) in dev.a.row_iter().zip(dev.b.iter()) {
                let score: f64 = row.transpose().dot(&x_star);
                hits += usize::from(score.signum() == label.signum());
                total += 1;
            }
        }
        hits as f64 / total as f64
    };
    println!("training sign agreement: {:.1}%", 100.0 * accuracy);
}
