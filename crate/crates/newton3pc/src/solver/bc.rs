//! Bidirectionally compressed variant: the model broadcast itself goes
//! through a three-point mechanism (devices hold a replica `z` of the model
//! and apply the same decoded update the server applies), and a shared coin
//! decides each round whether gradients cross the uplink or the server
//! extrapolates them from the learned curvature around the last anchor.

use super::n3pc::{broadcast_and_gather_grads, device_hessian_round, init_hessian_state};
use super::trace::Reference;
use super::{dense_vec, vec_of, Recorder, RunTrace, SolverConfig};
use crate::compress::Shape;
use crate::linalg::{project_psd_mu, solve_linear, Vector};
use crate::objective::Problem;
use crate::simnet::{Network, RngStream};

pub(crate) fn run_bc(
    problem: &Problem,
    config: &SolverConfig,
    reference: &Reference,
    net: &mut Network,
    rng: &RngStream,
) -> RunTrace {
    let n = problem.n_devices();
    let d = problem.dim();
    let spec = &config.hessian_3pc;
    assert_eq!(
        spec.shape(),
        Shape::Matrix { d },
        "hessian mechanism must be matrix-shaped at the problem dimension"
    );
    let master = config
        .master_3pc
        .as_ref()
        .expect("bidirectional runs need a master mechanism (set master_3pc)");
    assert_eq!(
        master.shape(),
        Shape::Vector { d },
        "master mechanism must be vector-shaped at the problem dimension"
    );
    assert!(
        (0.0..=1.0).contains(&config.grad_p),
        "gradient refresh probability must lie in [0, 1]"
    );
    let mu = config.mu.unwrap_or(problem.lambda());
    let all: Vec<usize> = (0..n).collect();
    let mut dev_rng: Vec<RngStream> = (0..n).map(|i| rng.split("device", i as u64)).collect();
    let mut server_rng = rng.split("server", 0);

    let mut rec = Recorder::new(problem, reference);
    let x0 = config.x0.clone();
    let mut g = broadcast_and_gather_grads(problem, &x0, &all, net, &mut rec);
    let mut hs = init_hessian_state(problem, &config.h0, spec, false, &x0, net, &mut rec);

    let mut x = x0.clone();
    let mut z = x0.clone();
    let mut w = x0;
    let mut g_w = g.clone();
    rec.record(0, &x, net, n as u64);

    let mut k = 0u64;
    while k < config.max_iter as u64 && !rec.reached(config.gap_target) {
        k += 1;
        let hp = match project_psd_mu(&hs.h_mean, mu) {
            Ok(m) => m,
            Err(e) => {
                rec.fail(format!("iteration {k}: eigenvalue floor: {e}"));
                break;
            }
        };
        let dx = match solve_linear(&hp, &g) {
            Ok(v) => v,
            Err(e) => {
                rec.fail(format!("iteration {k}: newton solve: {e}"));
                break;
            }
        };
        let x_next = &z - dx;
        if !x_next.iter().all(|v| v.is_finite()) {
            rec.fail(format!("iteration {k}: iterate became non-finite"));
            break;
        }

        // Compressed broadcast: every device applies the same decoded message
        // to its replica, so one copy of the update suffices for all of them.
        let (_, msg_m) = master.three_pc_vector(&z, &x, &x_next, &mut server_rng);
        let dec = net.send_down(&all, &msg_m).expect("self-built message");
        let z_next = master.update_vector(&z, &dec).expect("wire-consistent update");
        x = x_next;

        let refresh = server_rng.bernoulli(config.grad_p);
        net.send_down_flag(&all, refresh);

        let mut g_sum = Vector::zeros(d);
        for i in 0..n {
            device_hessian_round(
                problem,
                spec,
                i,
                &z_next,
                false,
                &mut hs,
                &mut dev_rng[i],
                net,
                &mut rec,
            );
            if refresh {
                let gi = problem.local_grad(i, &z_next);
                rec.grads += 1;
                let dec = net.send_up(i, &dense_vec(&gi)).expect("well-formed gradient");
                g_sum += vec_of(&dec, d);
            }
        }
        if refresh {
            g = g_sum / n as f64;
            w = z_next.clone();
            g_w = g.clone();
        } else {
            // No gradient bytes this round: extrapolate from the freshly
            // learned curvature around the anchor.
            let hp = match project_psd_mu(&hs.h_mean, mu) {
                Ok(m) => m,
                Err(e) => {
                    rec.fail(format!("iteration {k}: eigenvalue floor: {e}"));
                    break;
                }
            };
            let drift = &z_next - &w;
            g = hp.mul_vec(&drift) + &g_w;
        }
        z = z_next;
        hs.assert_mean_consistency();
        rec.record(k, &x, net, n as u64);
    }
    rec.finish()
}
