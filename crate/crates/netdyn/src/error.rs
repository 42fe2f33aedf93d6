use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A generator, library, or pipeline specification is malformed.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Text input that does not parse; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally valid input carrying an out-of-domain value.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation defined only for undirected graphs.
    #[error("{0} requires an undirected graph")]
    DirectedUnsupported(&'static str),

    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// Input contains NaN or infinity.
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    /// Integration produced a non-finite state.
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    /// Too few snapshots for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Singular linear system.
    #[error("singular system at pivot {pivot}")]
    Singular { pivot: usize },

    /// Singular active-set system for one regression row.
    #[error("rank-deficient active set in regression row {row}")]
    RankDeficient { row: usize },

    /// k-means could not keep every cluster nonempty.
    #[error("empty cluster persisted after {restarts} restarts")]
    EmptyCluster { restarts: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
