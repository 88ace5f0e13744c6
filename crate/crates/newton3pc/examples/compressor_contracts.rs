//! What each compressor keeps, and the contracts all of them satisfy.
//!
//! First compresses one concrete matrix so the selections are visible, then
//! runs the Monte-Carlo contract checks the library ships: contraction
//! `E‖C(X)−X‖² ≤ (1−α)‖X‖²` for the single-input compressors and the
//! three-point bound for the stateful mechanisms.

use nalgebra::DMatrix;

use newton3pc::compress::{
    standard_contractive_suite, standard_three_pc_suite, ContractiveSpec, Shape,
};
use newton3pc::simnet::RngStream;
use newton3pc::SymMatrix;

fn main() {
    let mut rng = RngStream::new(42);
    let d = 4;
    let shape = Shape::Matrix { d };
    let x = SymMatrix::from_symmetric(DMatrix::from_fn(d, d, |r, c| {
        if r == c { 4.0 + r as f64 } else { 1.0 / (1.0 + (r + c) as f64) }
    }));
    println!("input matrix (‖X‖_F = {:.4}):", x.frob_norm());
    print_matrix(&x);

    let specs = [
        ContractiveSpec::top_k(4, shape).unwrap(),
        ContractiveSpec::rank_r(1, d).unwrap(),
        ContractiveSpec::rand_k(4, false, shape).unwrap(),
        ContractiveSpec::adaptive_threshold(0.5, shape).unwrap(),
    ];
    for spec in &specs {
        let (compressed, msg) = spec.contract_matrix(&x, &mut rng);
        let err = compressed.sub(&x).frob_norm().powi(2) / x.frob_norm().powi(2);
        println!(
            "\n{}  →  {} wire bytes, ‖C(X)−X‖²/‖X‖² = {:.4} (α = {:?})",
            spec.label(),
            msg.encode().len(),
            err,
            spec.alpha(),
        );
        print_matrix(&compressed);
    }

    println!("\ncontract checks, 500 trials each:");
    let mut all_pass = true;
    for report in standard_contractive_suite(6, 500, &mut rng) {
        all_pass &= report.pass;
        println!("  {report}");
    }
    for report in standard_three_pc_suite(6, 500, &mut rng) {
        all_pass &= report.pass;
        println!("  {report}");
    }
    assert!(all_pass, "every shipped compressor must satisfy its contract");
}

fn print_matrix(m: &SymMatrix) {
    for r in 0..m.dim() {
        let row: Vec<String> = (0..m.dim()).map(|c| format!("{:7.3}", m.get(r, c))).collect();
        println!("    [{}]", row.join(" "));
    }
}
