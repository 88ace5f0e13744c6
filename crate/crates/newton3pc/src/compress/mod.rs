//! Compression layer: the wire message format, single-input contractive
//! compressors, and the three-point mechanisms built from them.
//!
//! A three-point mechanism `C_{H,Y}(X)` maps the matrix to compress `X` to a
//! new estimate, given the previous estimate `H` and the previous input `Y`,
//! and satisfies
//!
//! ```text
//! E‖C_{H,Y}(X) − X‖² ≤ (1 − A)·‖H − Y‖² + B·‖X − Y‖²
//! ```
//!
//! for constants `0 < A ≤ 1`, `B ≥ 0` carried on the spec. The constants are
//! not used by the algorithms at run time; they parameterize convergence
//! guarantees and the contract checks in [`verify`].

pub mod contractive;
pub mod message;
pub mod three_pc;
pub mod verify;

pub use contractive::{ContractiveKind, ContractiveSpec, Shape};
pub use message::{DecodeError, Message};
pub use three_pc::{HessianPlan, ThreePcKind, ThreePcSpec};
pub use verify::{
    random_orthogonal, standard_contractive_suite, standard_three_pc_suite, verify_3pc,
    verify_contractive, CheckedProperty, ContractReport, ThreePcReport,
};

/// Rejected compressor construction (parameter out of range, shape mismatch).
#[derive(Debug, Clone, thiserror::Error)]
pub enum SpecError {
    #[error("{0}")]
    Invalid(String),
}

impl SpecError {
    pub(crate) fn new(msg: impl Into<String>) -> Self {
        SpecError::Invalid(msg.into())
    }
}
