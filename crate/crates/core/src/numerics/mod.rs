//! Dense tensors, reverse-mode differentiation and seeded randomness.

mod rng;
mod tape;
mod tensor;

pub use rng::{derive_seed, SeededRng};
pub use tape::{BinaryKind, Gradients, Tape, UnaryKind, Var};
pub use tensor::Tensor2;
