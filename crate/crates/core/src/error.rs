use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("curve tracing failed at Q = {q}: {reason}")]
    Continuation { q: f64, reason: String },

    #[error("dP/dQ has a pole: 1 - alpha (a - b) = 0")]
    FrontPole,

    #[error("Legendrian is not invariant under the flow (deviation {deviation:e})")]
    NotInvariant { deviation: f64 },

    #[error(
        "Reeb field is not transverse to the level set near the Legendrian (dH(R) = {value:e})"
    )]
    NotTransverse { value: f64 },

    #[error("state space too large: |G| = {sites} (limit {limit})")]
    StateSpaceTooLarge { sites: usize, limit: usize },

    #[error("distribution is not normalized (total mass {mass})")]
    NotNormalized { mass: f64 },

    #[error("operation requires Curie-Weiss coupling")]
    NotCurieWeiss,

    #[error("perturbed flip rate is not positive (c' = {c_prime})")]
    NonPositiveRate { c_prime: f64 },

    #[error("admissibility check failed: {0}")]
    NotAdmissible(String),

    #[error("empty parameter window")]
    EmptyWindow,

    #[error("integration failed: {0}")]
    Integration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
