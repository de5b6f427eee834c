#![no_std]
//! Core of a local-feature toolkit: a small differentiable tensor engine,
//! a detector/descriptor network producing descriptor, reliability and
//! repeatability maps, training losses (including a covariance-based
//! style/structure loss), homography geometry, synthetic pair generation,
//! keypoint extraction, matching and accuracy evaluation.
//!
//! Everything here is `no_std` + `alloc`; file IO, timing and the
//! command-line interface live in the companion `sfeat` crate.

// `!(a >= b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod checkpoint;
pub mod covariance;
pub mod descfile;
pub mod detection;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod keypoints;
mod linalg;
pub mod matching;
pub mod math;
pub mod network;
pub mod optim;
pub mod synth;
pub mod train;
pub mod tensor;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
