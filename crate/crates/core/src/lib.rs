//! Stepwise monotonic attention and the alignment mechanisms it is compared
//! against, together with exact path-enumeration oracles, hard-attention
//! decoders, a small trainable encoder–decoder and alignment diagnostics.
//!
//! The numerical core ([`kernels`], [`hard_decoder`], [`oracle`],
//! [`diagnostics`]) is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the toy model and CLI use.

pub mod diagnostics;
pub mod error;
pub mod hard_decoder;
pub mod kernels;
pub mod matrix;
pub mod oracle;
pub mod scalar;
pub mod toy;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Mat = matrix::Matrix<f64>;
pub type Memory = kernels::MemorySequence<f64>;
pub type Row = kernels::AlignmentRow<f64>;
pub type Alignment = kernels::AlignmentMatrix<f64>;
pub type Probabilities = kernels::SelectionProbabilityMatrix<f64>;
pub type Energies = kernels::EnergyRow<f64>;
pub type Context = kernels::ContextVector<f64>;
