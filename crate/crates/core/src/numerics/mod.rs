//! Dense `f64` tensors, reverse-mode differentiation, MLPs, Adam and gradient
//! checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig, MultiStepLr};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use mlp::{Activation, Linear, Mlp};
pub use params::Parameters;
pub use tape::{Gradients, SparseMatrix, Tape, Var};
pub use tensor::Matrix;
