//! Single-image super-resolution with squeeze-and-excitation residual blocks.
//!
//! The crate is organised around a small tape-based reverse-mode autodiff
//! engine ([`autodiff`]) over rank-4 [`tensor::Tensor`] values, differentiable
//! layer primitives ([`ops`]), the SrSENet model itself ([`model`]),
//! Charbonnier/Adam training with binary checkpoints ([`train`],
//! [`checkpoint`]), a Matlab-convention bicubic imaging pipeline ([`imaging`])
//! and PSNR/SSIM benchmark evaluation ([`metrics`]).

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Precision, Scalar, Shape, Tensor};
