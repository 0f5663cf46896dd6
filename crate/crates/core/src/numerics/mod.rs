//! Dense tensors and reverse-mode automatic differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, RELATIVE_FLOOR};
pub use tape::{Gradients, Primitive, Tape, Var};
pub use tensor::Tensor;
