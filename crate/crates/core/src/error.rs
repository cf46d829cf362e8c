use thiserror::Error;

/// Errors raised by the authenticated containers and their support modules.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A recomputed MAC did not match the trusted one, or region contents
    /// were structurally impossible for an untampered container.
    #[error("MAC authentication error.")]
    Mac,
    #[error("operation on an empty structure")]
    EmptyStructure,
    #[error("slot handle is stale or was never allocated")]
    StaleHandle,
    #[error("region access out of bounds: offset {offset}, len {len}, region size {size}")]
    OutOfBounds { offset: u64, len: u64, size: u64 },
    #[error("adversary script model does not allow this trigger")]
    ModelMismatch,
    #[error("backend cannot produce a {0}-bit tag")]
    UnsupportedWidth(u32),
    #[error("queue index would overflow")]
    IndexOverflow,
    #[error("key {0} already present")]
    DuplicateKey(u64),
    #[error("key {0} not found")]
    KeyNotFound(u64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("structural invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Containers read every persistent field from adversary-writable memory,
    /// so a bounds failure while following stored offsets is a tamper signal.
    pub(crate) fn integrity(self) -> Self {
        match self {
            Error::OutOfBounds { .. } => Error::Mac,
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
