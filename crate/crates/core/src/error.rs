use thiserror::Error;

use crate::causal::OpLabel;

/// Errors raised by the verification kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or subsystem profiles do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix expected to be Hermitian is not, within tolerance.
    #[error("matrix is not Hermitian (deviation {deviation:.3e}, allowed {allowed:.3e})")]
    NotHermitian { deviation: f64, allowed: f64 },

    /// A PSD / CP requirement failed.
    #[error("positivity violated: {0}")]
    Positivity(String),

    /// An operation was called outside its domain.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Classical alphabets of wired objects do not agree.
    #[error("alphabet mismatch: {0}")]
    Alphabet(String),

    /// A conditional distribution is negative or not normalized.
    #[error("invalid conditional distribution: {0}")]
    Distribution(String),

    /// The supplied relation is not a strict partial order.
    #[error("not a strict partial order: {0}")]
    NotPartialOrder(String),

    #[error("unknown operation label {0}")]
    UnknownLabel(OpLabel),

    /// A wiring signals outside the past cone of some input set.
    #[error(
        "wiring does not respect the causal order: marginal over the first {k} Alice and {l} Bob inputs depends on output {slot}"
    )]
    CausalOrder { k: usize, l: usize, slot: OpLabel },

    /// A primed instrument produced during LOCC reconstruction is not an instrument.
    #[error("reconstruction step {step} ({label}) is not a valid instrument")]
    Reconstruction { step: usize, label: OpLabel },

    /// A classical process table is not a valid process.
    #[error("invalid classical process: {0}")]
    ProcessValidity(String),

    /// The separability LP had no feasible point.
    #[error("causal decomposition LP infeasible (phase-1 residual {residual:.3e})")]
    Infeasible { residual: f64 },

    /// A loop composition that should be LOCC* is not trace preserving.
    #[error("not an LOCC* decomposition: {0}")]
    Membership(String),

    #[error("cannot normalize factor pair: {0}")]
    Scaling(String),

    #[error("verification failed: {0}")]
    Verification(String),

    /// Input document violates its schema.
    #[error("invalid field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the input was well formed but a checked property failed.
    pub fn is_verification_failure(&self) -> bool {
        matches!(
            self,
            Error::CausalOrder { .. }
                | Error::Reconstruction { .. }
                | Error::ProcessValidity(_)
                | Error::Infeasible { .. }
                | Error::Membership(_)
                | Error::Verification(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        reason: reason.into(),
    }
}
