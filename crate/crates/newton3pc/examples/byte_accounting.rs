//! Where the bytes go: the network meter's view of one run.
//!
//! Every payload crosses the simulated star network encoded, so the meter's
//! totals describe bytes a receiver actually parsed. This example runs a few
//! iterations and prints the per-device and per-message-kind breakdown, then
//! reconciles the totals against the wire format by hand.

use newton3pc::compress::{ContractiveSpec, Shape, ThreePcSpec};
use newton3pc::objective::gen_synthetic;
use newton3pc::simnet::{Network, RngStream};
use newton3pc::solver::{run, run_exact_newton, NewtonStep, Reference, SolverConfig, SolverKind};
use newton3pc::Vector;

fn main() {
    let problem = gen_synthetic(0.5, 0.5, 10, 4, 30, 2, 1e-3);
    let d = problem.dim();
    let n = problem.n_devices();
    let x0 = Vector::zeros(d);

    let (x_star, f_star, _) = run_exact_newton(&problem, &x0, 50).unwrap();
    let reference = Reference::new(x_star, f_star);

    let k = 20;
    let mut config = SolverConfig::new(
        SolverKind::Newton { step: NewtonStep::EigenFloor },
        ThreePcSpec::ef21(ContractiveSpec::top_k(k, Shape::Matrix { d }).unwrap()).unwrap(),
        x0,
    );
    let iters = 10;
    config.max_iter = iters;

    let mut net = Network::new(n);
    let trace = run(&problem, &config, &reference, &mut net, &RngStream::new(4));
    assert!(trace.failure.is_none());
    let meter = net.meter();

    println!("after {iters} iterations on d = {d}, n = {n}, top-{k} Hessian corrections:");
    println!("\nper device:");
    for i in 0..n {
        println!("  device {i}: uplink {:>6}  downlink {:>6}", meter.uplink_of(i), meter.downlink_of(i));
    }
    println!("  total:    uplink {:>6}  downlink {:>6}", meter.uplink_total(), meter.downlink_total());

    println!("\nper message kind:");
    for (kind, bytes) in meter.by_kind() {
        println!("  {kind:>7}: {bytes:>6}");
    }

    // Wire arithmetic: a dense payload costs 1 + 8·numel bytes (tag plus
    // values) and a sparse one 5 + 12k (tag, count, then a 4-byte index and
    // 8-byte value per entry). Per device: init receives the dense start
    // point and uploads one dense gradient plus one dense d² estimate; each
    // iteration uploads one sparse top-k correction and one dense gradient,
    // and receives the dense model.
    let dense_v = 1 + 8 * d as u64;
    let dense_m = 1 + 8 * (d as u64 * d as u64);
    let sparse = 5 + 12 * k as u64;
    let it = iters as u64;
    let expect_up = (dense_v + dense_m) + it * (sparse + dense_v);
    let expect_down = (1 + it) * dense_v;
    assert_eq!(meter.uplink_of(0), expect_up, "uplink disagrees with the wire format");
    assert_eq!(meter.downlink_of(0), expect_down, "downlink disagrees with the wire format");
    println!("\nreconciled: uplink {expect_up} and downlink {expect_down} per device, straight from the wire format");
}
