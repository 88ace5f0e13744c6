//! Newton-type solvers over the simulated star network.
//!
//! All variants share the same skeleton: the server holds a learned Hessian
//! estimate `H` (the mean of per-device estimates), takes a Newton-like step,
//! and each device refreshes its estimate by sending a three-point compressed
//! Hessian message. The variants differ in the server step rule and in what
//! else is compressed (model broadcast, gradients, participation).

mod bc;
mod n3pc;
mod newton;
mod pp;
pub mod trace;

pub use newton::run_exact_newton;
pub(crate) use newton::solve_reference;
pub use trace::{Reference, RunTrace, TraceRow};

use crate::compress::ThreePcSpec;
use crate::linalg::{LinalgError, Vector};
use crate::objective::Problem;
use crate::simnet::{Network, RngStream};

/// Armijo sufficient-decrease constant used by the damped reference Newton
/// and the line-search solver.
pub const ARMIJO_C1: f64 = 1e-4;

/// The line-search stepsize grid `{1, 2⁻¹, ..., 2⁻¹⁰}`.
pub fn default_ls_grid() -> Vec<f64> {
    (0..=10).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("reference Newton diverged: objective rose {strikes} iterations in a row (iteration {iter})")]
    Diverged { iter: usize, strikes: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the server turns `(H, l, g)` into a model update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStep {
    /// `x⁺ = x − [H]_μ⁻¹ g`: eigenvalues of `H` floored at μ.
    EigenFloor,
    /// `x⁺ = x − (H + l·I)⁻¹ g`: additive shift by the averaged compression
    /// error, no eigendecomposition.
    ErrorShift,
}

/// Which solver variant to run.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverKind {
    /// Hessian-learning Newton; devices upload gradients uncompressed.
    Newton { step: NewtonStep },
    /// Adds compressed model broadcast and Bernoulli-lazy gradient rounds.
    Bidirectional,
    /// Adds uniform τ-subset device sampling with per-device lazy gradients.
    PartialParticipation { tau: usize },
    /// Cubic-regularized step for global convergence from far starts.
    CubicReg,
    /// Backtracking line search along the error-shifted Newton direction.
    LineSearch,
    /// Uncompressed damped Newton baseline (not metered; bytes stay zero).
    ExactNewton,
}

/// Initialization of the per-device Hessian estimates.
#[derive(Debug, Clone, PartialEq)]
pub enum H0Mode {
    /// `H_i⁰ = ∇²f_i(x⁰)`, uploaded dense once (metered).
    ExactAtX0,
    /// `H_i⁰ = 0`; nothing uploaded.
    Zero,
    /// Caller-supplied estimates, one per device (library use only, unmetered).
    Custom(Vec<crate::linalg::SymMatrix>),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Device → server Hessian mechanism (matrix-shaped).
    pub hessian_3pc: ThreePcSpec,
    /// Server → device model mechanism (vector-shaped); bidirectional and
    /// partial-participation variants only.
    pub master_3pc: Option<ThreePcSpec>,
    /// Bernoulli gradient-refresh probability in (0, 1].
    pub grad_p: f64,
    /// Eigenvalue floor μ; defaults to the problem's regularizer weight.
    pub mu: Option<f64>,
    /// Cubic-regularization weight.
    pub cubic_m: f64,
    /// Line-search stepsize candidates in (0, 1].
    pub ls_grid: Vec<f64>,
    pub max_iter: usize,
    /// Stop as soon as a recorded row reaches this optimality gap.
    pub gap_target: Option<f64>,
    pub x0: Vector,
    pub h0: H0Mode,
    /// Track the partial-participation bookkeeping identity each iteration
    /// (observer-side gradient evaluations; not metered or counted).
    pub track_key_relation: bool,
}

impl SolverConfig {
    /// A config with library defaults: full gradient refresh, μ from the
    /// problem, 200 iterations, exact Hessian initialization.
    pub fn new(kind: SolverKind, hessian_3pc: ThreePcSpec, x0: Vector) -> Self {
        Self {
            kind,
            hessian_3pc,
            master_3pc: None,
            grad_p: 1.0,
            mu: None,
            cubic_m: 1.0,
            ls_grid: default_ls_grid(),
            max_iter: 200,
            gap_target: None,
            x0,
            h0: H0Mode::ExactAtX0,
            track_key_relation: false,
        }
    }
}

/// Runs the configured solver. Runtime failures (a linear solve that loses
/// positive definiteness, a non-finite iterate) do not abort with an error:
/// the trace collected so far is returned with [`RunTrace::failure`] set.
pub fn run(
    problem: &Problem,
    config: &SolverConfig,
    reference: &Reference,
    net: &mut Network,
    rng: &RngStream,
) -> RunTrace {
    assert_eq!(config.x0.len(), problem.dim(), "x0 dimension mismatch");
    assert_eq!(net.meter().n_devices(), problem.n_devices(), "network sized for a different device count");
    match &config.kind {
        SolverKind::Newton { .. } | SolverKind::CubicReg | SolverKind::LineSearch => {
            n3pc::run_family(problem, config, reference, net, rng)
        }
        SolverKind::Bidirectional => bc::run_bc(problem, config, reference, net, rng),
        SolverKind::PartialParticipation { tau } => pp::run_pp(problem, config, *tau, reference, net, rng),
        SolverKind::ExactNewton => newton::run_exact_trace(problem, config, reference),
    }
}

/// Shared bookkeeping: metric rows against the reference plus the running
/// computation counters. Metrics are observer-side and never metered.
pub(crate) struct Recorder<'a> {
    problem: &'a Problem,
    reference: &'a Reference,
    pub trace: RunTrace,
    pub hessians: u64,
    pub grads: u64,
}

impl<'a> Recorder<'a> {
    pub fn new(problem: &'a Problem, reference: &'a Reference) -> Self {
        Self { problem, reference, trace: RunTrace::default(), hessians: 0, grads: 0 }
    }

    pub fn record(&mut self, iter: u64, x: &Vector, net: &Network, participated: u64) {
        let row = TraceRow {
            iter,
            f_gap: self.problem.global_value(x) - self.reference.f_star,
            dist_sq: (x - &self.reference.x_star).norm_squared(),
            bytes_up_cum: net.meter().uplink_total(),
            bytes_down_cum: net.meter().downlink_total(),
            hessians_computed_cum: self.hessians,
            grads_computed_cum: self.grads,
            participated,
        };
        self.trace.push(row, x);
    }

    /// True when the most recent row is at or below the target gap.
    pub fn reached(&self, gap_target: Option<f64>) -> bool {
        match (gap_target, self.trace.last_row()) {
            (Some(t), Some(row)) => row.f_gap <= t,
            _ => false,
        }
    }

    pub fn fail(&mut self, why: String) {
        self.trace.failure = Some(why);
    }

    pub fn finish(self) -> RunTrace {
        self.trace
    }
}

/// Encodes a vector as a dense wire message.
pub(crate) fn dense_vec(x: &Vector) -> crate::compress::Message {
    crate::compress::Message::Dense(x.iter().copied().collect())
}

/// Decodes a dense wire message back to a vector of length `d`.
pub(crate) fn vec_of(msg: &crate::compress::Message, d: usize) -> Vector {
    msg.to_vector(d).expect("dense message roundtrip")
}
