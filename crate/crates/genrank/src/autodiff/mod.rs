//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Enough machinery to express LSTM and transformer encoder-decoders and
//! train them with Adam: a Wengert tape ([`Tape`]/[`Var`]), composite cells
//! ([`lstm_cell`], [`attention`]), and a finite-difference oracle
//! ([`gradcheck`]) that backward rules are validated against.

pub mod adam;
pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use ops::{attention, linear, linear_rows, lstm_cell};
pub use tape::{concat, concat_cols, stack_rows, Tape, Var};
pub use tensor::Tensor;
