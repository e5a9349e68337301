use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("resonance condition violated: {0}")]
    ResonanceCondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("Fock cutoff exceeded: top-level population {population:.3e} (try fock_cutoff >= {suggested})")]
    Cutoff { population: f64, suggested: usize },

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("everything is a fixed point: interaction strength is zero")]
    TrivialFlow,
}
