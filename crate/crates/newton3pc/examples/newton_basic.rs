//! Newton steps from learned, compressed Hessians.
//!
//! Devices never ship their d×d Hessians whole: each round they send a
//! three-point compressed correction, the server maintains the running mean
//! of the per-device estimates, and the model update is a Newton step with
//! eigenvalues floored at μ. On a strongly convex logistic problem the
//! compressed run tracks exact Newton closely while moving a fraction of the
//! bytes.

use newton3pc::compress::{ContractiveSpec, Shape, ThreePcSpec};
use newton3pc::objective::gen_synthetic;
use newton3pc::simnet::{Network, RngStream};
use newton3pc::solver::{run, run_exact_newton, NewtonStep, Reference, SolverConfig, SolverKind};
use newton3pc::Vector;

fn main() {
    let problem = gen_synthetic(0.5, 0.5, 20, 8, 40, 1, 1e-3);
    let d = problem.dim();
    let x0 = Vector::zeros(d);

    let (x_star, f_star, _) = run_exact_newton(&problem, &x0, 50).unwrap();
    let reference = Reference::new(x_star, f_star);
    println!("reference: f* = {f_star:.12}, d = {d}, {} devices", problem.n_devices());

    let rank1 = ThreePcSpec::ef21(ContractiveSpec::rank_r(1, d).unwrap()).unwrap();
    let dense = ThreePcSpec::identity(Shape::Matrix { d }).unwrap();

    println!("\n{:>4}  {:>13}  {:>13}  {:>12}  {:>12}", "iter", "gap(rank-1)", "gap(dense)", "up(rank-1)", "up(dense)");
    let traces: Vec<_> = [rank1, dense]
        .into_iter()
        .map(|mech| {
            let label = mech.label();
            let config = SolverConfig::new(
                SolverKind::Newton { step: NewtonStep::EigenFloor },
                mech,
                x0.clone(),
            );
            let mut net = Network::new(problem.n_devices());
            let trace = run(&problem, &config, &reference, &mut net, &RngStream::new(7));
            assert!(trace.failure.is_none(), "{label} failed: {:?}", trace.failure);
            trace
        })
        .collect();

    for k in (0..traces[0].rows.len().min(traces[1].rows.len())).step_by(2) {
        let a = &traces[0].rows[k];
        let b = &traces[1].rows[k];
        println!(
            "{:>4}  {:>13.3e}  {:>13.3e}  {:>12}  {:>12}",
            a.iter, a.f_gap, b.f_gap, a.bytes_up_cum, b.bytes_up_cum
        );
        if a.f_gap <= 1e-12 && b.f_gap <= 1e-12 {
            break;
        }
    }

    let (up_r1, _) = traces[0].bytes_to_gap(1e-10).expect("rank-1 run reaches 1e-10");
    let (up_id, _) = traces[1].bytes_to_gap(1e-10).expect("dense run reaches 1e-10");
    println!(
        "\nuplink bytes to gap 1e-10: rank-1 {up_r1}, dense {up_id} ({:.1}x less traffic)",
        up_id as f64 / up_r1 as f64
    );
}
