//! Minimal dense-tensor math with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit floating point and at most two-dimensional. A
//! [`Tape`] records primitive operations during the forward pass and replays
//! them in reverse to accumulate gradients into [`Parameter`]s. First-order
//! optimizers ([`Optimizer`]) update parameters in place from those
//! gradients, and [`checkpoint`] provides a bit-exact binary container for
//! parameter sets.
//!
//! The tape is single-threaded by design: one tape per training run, with
//! exclusive access required for `backward` and optimizer steps. Tensors and
//! parameter sets are plain data and safe to share for read-only use.

mod checkpoint;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{ParamId, Parameter, ParamSet};
pub use tape::{softmax_stable, Tape, Var};
pub use tensor::Tensor;

/// Probabilities are clamped here before any `log`, keeping losses finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// Errors surfaced by tensor construction, tape operations, optimizers and
/// checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
