//! Dense-tensor computation with reverse-mode differentiation.
//!
//! The computation graph is an eager tape: every operation computes its value
//! when recorded and `backward` walks the tape in reverse. Graphs are built per
//! sample and confined to one thread; trainable parameters live outside the
//! tape in a [`ParamStore`] and are leased in as named leaves.

mod adamw;
mod params;
mod schedule;
mod snapshot;
mod tape;

pub use adamw::AdamW;
pub use params::{Param, ParamStore};
pub use schedule::WarmupCosine;
pub use snapshot::{load_snapshot, save_snapshot};
pub use tape::{Tape, TensorId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {0}")]
    BadSnapshot(String),
    #[error("environment error: {0}")]
    Env(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
