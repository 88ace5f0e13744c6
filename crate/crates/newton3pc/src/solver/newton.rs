//! Damped exact Newton: the uncompressed baseline and the producer of the
//! reference optimum all gap metrics are measured against.

use super::trace::{Reference, RunTrace, TraceRow};
use super::{SolverConfig, SolverError, ARMIJO_C1};
use crate::linalg::solve_linear;
use crate::objective::Problem;
use crate::linalg::Vector;

struct Core {
    iterates: Vec<Vector>,
    values: Vec<f64>,
    failure: Option<SolverError>,
}

fn damped_core(problem: &Problem, x0: &Vector, iters: usize) -> Core {
    let mut x = x0.clone();
    let mut f = problem.global_value(&x);
    let mut iterates = vec![x.clone()];
    let mut values = vec![f];
    let mut strikes = 0usize;

    for k in 1..=iters {
        let g = problem.global_grad(&x);
        if g.norm() <= 1e-14 {
            break;
        }
        let h = problem.global_hess(&x);
        let dx = match solve_linear(&h, &g) {
            Ok(dx) => dx,
            Err(e) => return Core { iterates, values, failure: Some(e.into()) },
        };
        let dir = -dx;
        let slope = g.dot(&dir);
        // Decreases below the objective's evaluation noise cannot be line
        // searched; take the unit step, which is safe that close to the
        // minimizer of a strongly convex objective.
        let noise = 1e-15 * (1.0 + f.abs());
        let mut gamma = 1.0;
        if slope.abs() > noise {
            while problem.global_value(&(&x + gamma * &dir)) > f + ARMIJO_C1 * gamma * slope
                && gamma > 2f64.powi(-60)
            {
                gamma *= 0.5;
            }
        }
        x += gamma * &dir;
        let f_new = problem.global_value(&x);
        strikes = if f_new > f + noise { strikes + 1 } else { 0 };
        f = f_new;
        iterates.push(x.clone());
        values.push(f);
        if strikes >= 5 {
            return Core { iterates, values, failure: Some(SolverError::Diverged { iter: k, strikes }) };
        }
    }
    Core { iterates, values, failure: None }
}

/// Runs `iters` damped Newton iterations (unit step when Armijo's condition
/// holds, halved otherwise) and returns the final iterate, its objective
/// value, and a self-referenced trace. Stops early once the gradient norm
/// drops below 1e-14.
///
/// The run is an observer-side computation; nothing is metered.
pub fn run_exact_newton(
    problem: &Problem,
    x0: &Vector,
    iters: usize,
) -> Result<(Vector, f64, RunTrace), SolverError> {
    let core = damped_core(problem, x0, iters);
    if let Some(e) = core.failure {
        return Err(e);
    }
    let x_star = core.iterates.last().expect("at least the start point").clone();
    let f_star = *core.values.last().expect("at least the start value");
    let reference = Reference::new(x_star.clone(), f_star);
    let trace = trace_against(problem, &core, &reference, None);
    Ok((x_star, f_star, trace))
}

/// Produces the reference optimum: a damped run followed by pure Newton
/// polish steps, accepted while they shrink the gradient norm. The line
/// search alone stalls once predicted decreases sink under the objective's
/// evaluation noise, which leaves the gradient several orders of magnitude
/// above what the polish reaches.
pub(crate) fn solve_reference(problem: &Problem, x0: &Vector, iters: usize) -> Result<Reference, SolverError> {
    let (mut x_star, _, _) = run_exact_newton(problem, x0, iters)?;
    let mut g = problem.global_grad(&x_star);
    for _ in 0..8 {
        let h = problem.global_hess(&x_star);
        let dx = solve_linear(&h, &g)?;
        let cand = &x_star - dx;
        let g_cand = problem.global_grad(&cand);
        if g_cand.norm() >= g.norm() {
            break;
        }
        x_star = cand;
        g = g_cand;
    }
    let f_star = problem.global_value(&x_star);
    Ok(Reference::new(x_star, f_star))
}

/// The exact-Newton solver kind: same damped loop, but rows are measured
/// against the supplied reference and a divergence becomes a failure mark
/// instead of an error.
pub(crate) fn run_exact_trace(problem: &Problem, config: &SolverConfig, reference: &Reference) -> RunTrace {
    let core = damped_core(problem, &config.x0, config.max_iter);
    let mut trace = trace_against(problem, &core, reference, config.gap_target);
    if let Some(e) = core.failure {
        trace.failure = Some(e.to_string());
    }
    trace
}

fn trace_against(
    problem: &Problem,
    core: &Core,
    reference: &Reference,
    gap_target: Option<f64>,
) -> RunTrace {
    let n = problem.n_devices() as u64;
    let mut trace = RunTrace::default();
    for (k, (x, f)) in core.iterates.iter().zip(&core.values).enumerate() {
        let row = TraceRow {
            iter: k as u64,
            f_gap: f - reference.f_star,
            dist_sq: (x - &reference.x_star).norm_squared(),
            bytes_up_cum: 0,
            bytes_down_cum: 0,
            hessians_computed_cum: n * k as u64,
            grads_computed_cum: n * k as u64,
            participated: n,
        };
        trace.push(row, x);
        if gap_target.is_some_and(|t| row.f_gap <= t) {
            break;
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DeviceData;
    use crate::objective::gen_synthetic;
    use nalgebra::DMatrix;

    fn pure_quadratic(lambda: f64, d: usize) -> Problem {
        let shard = DeviceData { a: DMatrix::zeros(1, d), b: Vector::from_element(1, 1.0) };
        Problem::logreg(vec![shard], lambda)
    }

    #[test]
    fn quadratic_converges_in_one_step() {
        let problem = pure_quadratic(0.3, 4);
        let x0 = Vector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let (x_star, _, trace) = run_exact_newton(&problem, &x0, 20).unwrap();
        assert!(
            x_star.abs().max() <= 1e-14,
            "quadratic minimizer is the origin up to solver rounding, got {x_star:?}"
        );
        assert!(
            trace.rows.len() <= 3,
            "one Newton step plus the gradient stop, got {} rows",
            trace.rows.len()
        );
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let problem = pure_quadratic(0.3, 3);
        let (x_star, f_star, trace) = run_exact_newton(&problem, &Vector::zeros(3), 20).unwrap();
        assert_eq!(x_star, Vector::zeros(3));
        assert_eq!(trace.rows.len(), 1, "no step should be taken from the optimum");
        assert_eq!(f_star, problem.global_value(&x_star));
    }

    #[test]
    fn reference_gradient_is_tiny_on_synthetic_data() {
        let problem = gen_synthetic(0.5, 0.5, 10, 4, 60, 11, 1e-3);
        let reference = solve_reference(&problem, &Vector::zeros(10), 30).unwrap();
        let gnorm = problem.global_grad(&reference.x_star).norm();
        assert!(gnorm <= 1e-12, "polished reference gradient norm {gnorm} too large");
        assert_eq!(reference.f_star, problem.global_value(&reference.x_star));

        let (x_star, f_star, trace) = run_exact_newton(&problem, &Vector::zeros(10), 30).unwrap();
        assert!(trace.final_gap().unwrap() <= 1e-15);
        assert!(f_star < problem.global_value(&Vector::zeros(10)));
        assert!((&x_star - &reference.x_star).norm() <= 1e-7, "damped endpoint far from polished reference");
        let monotone = trace.rows.windows(2).all(|w| w[1].f_gap <= w[0].f_gap + 1e-15);
        assert!(monotone, "damped Newton must stay monotone up to evaluation noise");
    }
}
