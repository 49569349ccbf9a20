//! Dense-tensor kernels and reverse-mode differentiation.

mod gradcheck;
pub mod ops;
mod tape;

pub use gradcheck::finite_difference_check;
pub use ops::{activation, affine, conv1d_dilated, dropout_mask, Activation, Padding};
pub use tape::{Gradients, Tape, Var};
