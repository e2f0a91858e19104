use stfl_core::CoreError;
use stfl_crypto::CryptoError;
use thiserror::Error;

/// Setup preconditions on the parties' data. Each variant corresponds to one
/// of the two heterogeneity requirements checked before any training.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupViolation {
    #[error("id-overlap requirement violated: host and guest share no sample ids")]
    EmptyIdIntersection,

    #[error("feature-novelty requirement violated: guest {guest} contributes no feature outside the host's schema")]
    NoNewGuestFeatures { guest: u8 },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("setup aborted: {0}")]
    SetupAborted(SetupViolation),

    #[error("message out of sequence: expected {expected}, got {got}")]
    SequenceViolation { expected: u32, got: u32 },

    #[error("unexpected message in {context}: got {got}")]
    UnexpectedMessage { context: String, got: String },

    #[error("malformed message: {0}")]
    Codec(String),

    #[error("peer aborted: {0}")]
    PeerAbort(String),

    #[error("party has no trained feature extractor yet")]
    MissingVae,

    #[error("channel closed")]
    ChannelClosed,

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Crypto(#[from] CryptoError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
