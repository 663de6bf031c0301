//! Dense f64 tensors and reverse-mode automatic differentiation.
//!
//! Everything the model touches is a [`Tensor`]: a shape plus row-major
//! `f64` storage. Differentiable computations are recorded on a [`Tape`];
//! each recorded operation knows how to push its output gradient back to its
//! inputs, and [`Tape::backward`] replays the tape in reverse to produce
//! gradients for every trainable leaf. A tape lives for one forward/backward
//! pass and is rebuilt per training step; parameters persist outside the tape
//! as plain tensors.
//!
//! Analytic gradients are validated against central finite differences by
//! [`grad_check`], which every composite used by the model goes through in
//! the test suite.

mod blob;
mod gradcheck;
mod tensor;
mod tape;

pub use blob::{read_blob, write_blob, BlobError};
pub use gradcheck::grad_check;
pub use tensor::Tensor;
pub use tape::{Gradients, MaskMode, Tap, Tape, Var};
pub(crate) use tape::quat_product;
