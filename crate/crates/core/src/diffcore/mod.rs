//! Dense arrays, a reverse-mode gradient tape and the Adam optimizer.

mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig, Param, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

