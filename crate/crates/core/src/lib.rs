//! Intrusive stochastic Galerkin toolkit for detecting bifurcations: chaos
//! bases and moment tensors, Karhunen-Loeve parameters, the pitchfork normal
//! form, a Taylor-Hood Navier-Stokes solver for the sudden-expansion channel,
//! its stochastic Galerkin extension, a Monte Carlo baseline and density
//! post-processing.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dense;
pub mod diagram;
pub mod error;
pub mod fem;
pub mod klexp;
pub mod mc;
pub mod mesh;
pub mod nssolve;
pub mod pcbasis;
pub mod pitchfork;
pub mod sparse;
pub mod ssfem;
pub mod uq_stats;

pub use error::{Error, Result};
