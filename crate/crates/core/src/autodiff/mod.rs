//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Operations are recorded on a [`Tape`] as they are evaluated; calling
//! [`Tape::backward`] walks the tape in reverse and accumulates exact
//! gradients into every tensor created with `requires_grad`.

mod adam;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use tape::{BatchStats, Matrix, Tape, Tensor, TensorId};
