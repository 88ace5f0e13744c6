//! Newton-type distributed optimization with compressed curvature communication.
//!
//! A server and `n` devices jointly minimize `f(x) = (1/n) Σ f_i(x)` where each
//! `f_i` is held by one device. Devices learn the server's Hessian estimate over
//! time by sending *three-point compressed* updates: cheap messages (sparse
//! entries, low-rank factors, or nothing at all) that provably keep the server
//! estimate contracting toward the true Hessian. The solvers here cover the
//! basic Newton iteration with learned Hessians, bidirectional compression,
//! partial device participation, cubic regularization for global convergence,
//! and a line-search variant.
//!
//! The crate is organized around runnable examples; each major capability has
//! one under `examples/`:
//!
//! ```text
//! cargo run --release --example compressor_contracts   # contraction/3PC bound checks
//! cargo run --release --example newton_basic           # Hessian-learning Newton run
//! cargo run --release --example bidirectional          # compressed model broadcast + lazy gradients
//! cargo run --release --example partial_participation  # device sampling + gradient reconstruction
//! cargo run --release --example cubic_regularization   # globally convergent variant, far start
//! cargo run --release --example line_search            # backtracking variant on synthetic data
//! cargo run --release --example byte_accounting        # bytes-to-accuracy comparison table
//! cargo run --release --example libsvm_pipeline        # parse, shard, reference solve, CSV trace
//! ```
//!
//! The thin `n3pc` binary wraps the same entry points behind a config-file CLI
//! (`run`, `compare`, `verify-compressors`, `selftest`).

pub mod compress;
pub mod dataio;
pub mod experiment;
pub mod linalg;
pub mod objective;
pub mod simnet;
pub mod solver;

pub use linalg::{SymMatrix, Vector};

/// Crate-wide error type; variants indicate which stage failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Decode(#[from] compress::DecodeError),
    #[error(transparent)]
    Spec(#[from] compress::SpecError),
    #[error(transparent)]
    Parse(#[from] dataio::ParseError),
    #[error(transparent)]
    Split(#[from] dataio::SplitError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Config(#[from] experiment::ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
