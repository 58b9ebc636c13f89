//! Error taxonomy shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A binary or textual record does not match its declared layout.
    #[error("malformed record: {0}")]
    MalformedRecord(String),

    /// Configuration values violate their stated constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// A frame was asked to begin a round whose counter does not match the
    /// frame's own operation counter. Signals a probe/simulator bug.
    #[error("trace desynchronization: frame expects round {expected}, got {got}")]
    TraceDesync { expected: u64, got: u64 },

    /// Channel index at or beyond the configured channel count.
    #[error("invalid channel {channel} (num_channels = {num_channels})")]
    InvalidChannel { channel: usize, num_channels: usize },

    /// The (operation, algorithm) pair has no decomposition.
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),

    /// Scenario script could not be parsed.
    #[error("scenario syntax error at line {line}: {msg}")]
    ScenarioSyntax { line: usize, msg: String },

    /// A computation was requested before enough data was observed.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Snapshot requested for a round that was never begun (or was released).
    #[error("no round: {0}")]
    NoRound(String),

    #[error("unknown communicator {0}")]
    UnknownCommunicator(u64),

    /// Rounds fed to the baseline out of order.
    #[error("ordering error: round {got} after round {prev}")]
    OutOfOrderRound { prev: u64, got: u64 },

    #[error("invalid baseline: {0}")]
    InvalidBaseline(String),

    /// Location invoked without a matching detection.
    #[error("invalid invocation: {0}")]
    InvalidInvocation(String),

    /// Location lacks the snapshots it needs to decide.
    #[error("insufficient evidence: {0}")]
    InsufficientEvidence(String),

    #[error("schema mismatch: expected version {expected}, got {got}")]
    SchemaMismatch { expected: u32, got: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
