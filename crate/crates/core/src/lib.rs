//! Compact twice-fusion edge detection: a small autodiff tensor engine,
//! the CTFN network, the WCE / focal / dynamic focal loss family, a
//! BSDS-style boundary benchmark, synthetic data and an SGD trainer.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the element type for the common cases.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod loss;
pub mod map;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use map::{BinaryMap, EdgeMap};
pub use tensor::{grad_check, ConvGeometry, GradCheckReport, Gradients, Tape, Tensor, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;

pub use model::{Ctfn, Ctfn32, Ctfn64, ModelConfig};
