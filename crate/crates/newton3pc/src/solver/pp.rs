//! Partial participation: each round the server samples a device subset,
//! delivers the model to those devices through the master mechanism, and
//! folds their updates into running aggregates. The server keeps one cached
//! model-gradient per device, built so that it can be advanced without any
//! gradient bytes when the device's refresh coin says skip.
//!
//! The cached quantity for device `i` is `g_i = ([H_i]_s + l_i I) w_i −
//! ∇f_i(w_i)` at the device's anchor `w_i`. The next model solves the
//! averaged system directly: `x⁺ = (mean [H_i]_s + l̄ I)⁻¹ mean g_i`; no
//! separate additive model term is needed because every `g_i` carries its
//! own anchor.

use super::trace::Reference;
use super::{dense_vec, vec_of, H0Mode, Recorder, RunTrace, SolverConfig};
use crate::compress::{HessianPlan, Message, Shape};
use crate::linalg::{project_psd_mu, solve_linear, SymMatrix, Vector};
use crate::objective::Problem;
use crate::simnet::{sample_subset, Network, RngStream};

#[allow(clippy::too_many_lines)]
pub(crate) fn run_pp(
    problem: &Problem,
    config: &SolverConfig,
    tau: usize,
    reference: &Reference,
    net: &mut Network,
    rng: &RngStream,
) -> RunTrace {
    let n = problem.n_devices();
    let d = problem.dim();
    assert!(tau >= 1 && tau <= n, "participation size {tau} must lie in 1..={n}");
    let spec = &config.hessian_3pc;
    assert_eq!(
        spec.shape(),
        Shape::Matrix { d },
        "hessian mechanism must be matrix-shaped at the problem dimension"
    );
    let master = config
        .master_3pc
        .as_ref()
        .expect("partial-participation runs need a master mechanism (set master_3pc)");
    assert_eq!(
        master.shape(),
        Shape::Vector { d },
        "master mechanism must be vector-shaped at the problem dimension"
    );
    assert!(
        (0.0..=1.0).contains(&config.grad_p),
        "gradient refresh probability must lie in [0, 1]"
    );
    let floor = config.mu.unwrap_or(problem.lambda());
    let needs_y = spec.needs_y();
    let all: Vec<usize> = (0..n).collect();
    let mut dev_rng: Vec<RngStream> = (0..n).map(|i| rng.split("device", i as u64)).collect();
    let mut server_rng = rng.split("server", 0);

    let mut rec = Recorder::new(problem, reference);
    let x0 = config.x0.clone();

    net.send_down(&all, &dense_vec(&x0)).expect("well-formed broadcast");
    let mut z: Vec<Vector> = vec![x0.clone(); n];
    let mut w: Vec<Vector> = vec![x0.clone(); n];
    let mut last_x: Vec<Vector> = vec![x0.clone(); n];
    let mut h_dev: Vec<SymMatrix> = Vec::with_capacity(n);
    let mut h_proj: Vec<SymMatrix> = Vec::with_capacity(n);
    let mut l_dev = vec![0.0; n];
    let mut g_dev: Vec<Vector> = Vec::with_capacity(n);
    let mut prev_hess: Vec<SymMatrix> = Vec::new();

    for i in 0..n {
        let grad = {
            let gi = problem.local_grad(i, &x0);
            rec.grads += 1;
            let dec = net.send_up(i, &dense_vec(&gi)).expect("well-formed gradient");
            vec_of(&dec, d)
        };
        // The error scalar needs the true curvature even when the estimate
        // starts at zero, so every device evaluates it once here.
        let hess = problem.local_hess(i, &x0);
        rec.hessians += 1;
        let h0_i = match &config.h0 {
            H0Mode::ExactAtX0 => {
                let flat: Vec<f64> = (0..hess.numel()).map(|e| hess.flat(e)).collect();
                let dec =
                    net.send_up(i, &Message::Dense(flat)).expect("well-formed dense estimate");
                dec.to_matrix(d).expect("dense estimate roundtrip")
            }
            H0Mode::Zero => SymMatrix::zeros(d),
            H0Mode::Custom(ms) => {
                assert_eq!(ms.len(), n, "custom initialization needs one estimate per device");
                assert_eq!(ms[i].dim(), d, "custom estimate dimension mismatch");
                ms[i].clone()
            }
        };
        let proj = match project_psd_mu(&h0_i, floor) {
            Ok(m) => m,
            Err(e) => {
                rec.fail(format!("device {i} initialization: eigenvalue floor: {e}"));
                return rec.finish();
            }
        };
        let l = {
            let l = proj.sub(&hess).frob_norm();
            let dec = net.send_up(i, &Message::Scalar(l)).expect("well-formed scalar");
            let Message::Scalar(l) = dec else { unreachable!("scalar roundtrip") };
            l
        };
        let gm = proj.mul_vec(&x0) + l * &x0 - &grad;
        h_dev.push(h0_i);
        h_proj.push(proj);
        l_dev[i] = l;
        g_dev.push(gm);
        if needs_y {
            prev_hess.push(hess);
        }
    }

    let mut g = {
        let mut s = g_dev[0].clone();
        for v in &g_dev[1..] {
            s += v;
        }
        s / n as f64
    };
    let mut hp_mean = {
        let mut s = h_proj[0].clone();
        for m in &h_proj[1..] {
            s = s.add(m);
        }
        s.scale(1.0 / n as f64)
    };
    let mut l_mean = l_dev.iter().sum::<f64>() / n as f64;
    let mut key_worst = 0.0f64;
    rec.record(0, &x0, net, n as u64);

    let mut k = 0u64;
    'outer: while k < config.max_iter as u64 && !rec.reached(config.gap_target) {
        k += 1;
        let mut mat = hp_mean.clone();
        mat.add_diag(l_mean);
        let x_next = match solve_linear(&mat, &g) {
            Ok(v) => v,
            Err(e) => {
                rec.fail(format!("iteration {k}: model solve: {e}"));
                break;
            }
        };
        if !x_next.iter().all(|v| v.is_finite()) {
            rec.fail(format!("iteration {k}: iterate became non-finite"));
            break;
        }

        let subset = sample_subset(n, tau, &mut server_rng);
        for &i in &subset {
            let (_, msg_m) = master.three_pc_vector(&z[i], &last_x[i], &x_next, &mut server_rng);
            let dec = net.send_down(&[i], &msg_m).expect("self-built message");
            let z_new = master.update_vector(&z[i], &dec).expect("wire-consistent update");
            last_x[i] = x_next.clone();

            // Participants always evaluate the local curvature at the model
            // they just received; the mechanism coin only decides whether an
            // update is worth uploading.
            let hess_new = problem.local_hess(i, &z_new);
            rec.hessians += 1;
            let (h_new, proj_new) = match spec.plan(&mut dev_rng[i]) {
                HessianPlan::Skip => {
                    let dec = net.send_up(i, &Message::Skip).expect("well-formed skip");
                    debug_assert!(matches!(dec, Message::Skip));
                    (h_dev[i].clone(), h_proj[i].clone())
                }
                HessianPlan::Compute => {
                    let (_, msg) = if needs_y {
                        spec.compress_matrix(&h_dev[i], &prev_hess[i], &hess_new, &mut dev_rng[i])
                    } else {
                        spec.compress_matrix(&h_dev[i], &h_dev[i], &hess_new, &mut dev_rng[i])
                    };
                    let dec = net.send_up(i, &msg).expect("self-built message");
                    let h_new = spec.update_matrix(&h_dev[i], &dec).expect("wire-consistent update");
                    match project_psd_mu(&h_new, floor) {
                        Ok(p) => (h_new, p),
                        Err(e) => {
                            rec.fail(format!("iteration {k}, device {i}: eigenvalue floor: {e}"));
                            break 'outer;
                        }
                    }
                }
            };
            let l_new = {
                let l = proj_new.sub(&hess_new).frob_norm();
                let dec = net.send_up(i, &Message::Scalar(l)).expect("well-formed scalar");
                let Message::Scalar(l) = dec else { unreachable!("scalar roundtrip") };
                l
            };
            let refresh = dev_rng[i].bernoulli(config.grad_p);
            net.send_up_flag(i, refresh);
            let (g_new, w_new) = if refresh {
                let gi = {
                    let gi = problem.local_grad(i, &z_new);
                    rec.grads += 1;
                    let dec = net.send_up(i, &dense_vec(&gi)).expect("well-formed gradient");
                    vec_of(&dec, d)
                };
                (proj_new.mul_vec(&z_new) + l_new * &z_new - gi, z_new.clone())
            } else {
                // Anchor unchanged: the cached model-gradient moves by the
                // curvature delta, which the server forms from state it
                // already holds. No gradient bytes cross the uplink.
                let delta =
                    proj_new.sub(&h_proj[i]).mul_vec(&w[i]) + (l_new - l_dev[i]) * &w[i];
                (&g_dev[i] + delta, w[i].clone())
            };

            g += (&g_new - &g_dev[i]) / n as f64;
            hp_mean = hp_mean.add(&proj_new.sub(&h_proj[i]).scale(1.0 / n as f64));
            l_mean += (l_new - l_dev[i]) / n as f64;

            h_dev[i] = h_new;
            h_proj[i] = proj_new;
            l_dev[i] = l_new;
            g_dev[i] = g_new;
            z[i] = z_new;
            w[i] = w_new;
            if needs_y {
                prev_hess[i] = hess_new;
            }
        }

        if config.track_key_relation {
            // Diagnostic probe only: recomputes local gradients outside the
            // protocol, so nothing here is metered or counted.
            for i in 0..n {
                let model = h_proj[i].mul_vec(&w[i]) + l_dev[i] * &w[i]
                    - problem.local_grad(i, &w[i]);
                let residual = (&g_dev[i] - model).abs().max();
                key_worst = key_worst.max(residual);
            }
        }
        rec.record(k, &x_next, net, tau as u64);
    }
    let mut trace = rec.finish();
    if config.track_key_relation {
        trace.key_relation_residual = Some(key_worst);
    }
    trace
}
