//! Minimal reverse-mode differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
pub mod ops;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use ops::{ApBinning, Binary, ConvGeometry, PatchReduction, Reduction, Unary};
