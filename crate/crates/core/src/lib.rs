#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Variational autoencoders whose latent regularizer works on batch
//! statistics of hyperspherical coordinates.
//!
//! The crate is generic over the real scalar type ([`Scalar`]: `f32` or
//! `f64`); the aliases at the root pin the common 64-bit instantiations.

pub mod data;
pub mod diffcore;
pub mod distributions;
pub mod error;
pub mod hypersphere;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod vae;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = diffcore::Tensor<f64>;
pub type Tensor32 = diffcore::Tensor<f32>;
pub type Tape64 = diffcore::Tape<f64>;
pub type HsphCoords64 = hypersphere::HsphCoords<f64>;
pub type VmfParams64 = distributions::VmfParams<f64>;
pub type PriorSpec64 = vae::PriorSpec<f64>;
pub type Vae64 = vae::Vae<f64>;
pub type Vae32 = vae::Vae<f32>;
