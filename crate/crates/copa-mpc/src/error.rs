use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("key file error: {0}")]
    KeyFile(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid party index {0} (expected 0..=3)")]
    InvalidParty(u8),

    #[error("invalid slot index {0} (expected 0..=3)")]
    InvalidSlot(u8),

    #[error("views belong to the same party {0}")]
    SameParty(u8),

    #[error("inconsistent shares: slot {slot} disagrees between the two views")]
    InconsistentShares { slot: u8 },

    #[error("diagonal term ({0},{0}) has no communication roles")]
    DiagonalTerm(u8),

    #[error("party index mismatch: expected {expected}, got {got}")]
    PartyMismatch { expected: u8, got: u8 },

    #[error("range [{offset:#x}, +{len}) out of bounds (region size {size})")]
    OutOfBounds { offset: u64, len: u64, size: u64 },

    #[error("range [{offset:#x}, +{len}) is not registered for remote access")]
    UnregisteredRange { offset: u64, len: u64 },

    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),

    #[error("command count must be at least 1")]
    ZeroCount,

    #[error("PRF counter space overflow")]
    CounterOverflow,

    #[error("tag mismatch in batch {batch_id}: element {element}, term ({a},{b})")]
    TagMismatch {
        batch_id: u64,
        element: u64,
        a: u8,
        b: u8,
    },

    #[error("batch {0} is poisoned by an earlier abort")]
    BatchPoisoned(u64),

    #[error("fabric timeout: {0}")]
    FabricTimeout(String),

    #[error("malformed wire message: {0}")]
    Frame(String),

    #[error("protocol misuse: {0}")]
    Protocol(String),

    #[error("oracle mismatch at element {0}")]
    OracleMismatch(u64),
}
