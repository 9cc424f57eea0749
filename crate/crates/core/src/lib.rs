//! Multivariate sparse Gaussian-process emulation and Bayesian global
//! sensitivity analysis.
//!
//! The crate is `no_std` and only needs an allocator. It covers:
//!
//! * [`design`]: Latin hypercube designs for mixed continuous/categorical
//!   inputs plus input scaling and output standardization.
//! * [`kernels`]: compactly supported correlation functions, cut-off
//!   calibration and sparse correlation assembly.
//! * [`sparse`]: compressed symmetric storage and a fill-reducing sparse
//!   Cholesky factorization.
//! * [`emulator`]: the matrix-normal inverse-Wishart Gaussian-process model,
//!   its conditional posteriors, the marginal cut-off posterior and
//!   matrix-normal / matrix-t prediction.
//! * [`mcmc`]: robust adaptive Metropolis within Gibbs and the potential scale
//!   reduction diagnostic.
//! * [`sensitivity`]: Saltelli sampling, first-order/total, trace-based and
//!   vector-projection indices, and main-effect curves.
//! * [`testfns`]: analytic benchmark functions with exact oracles.
//!
//! IO, threading and the command line live in the companion `msgp` crate.
#![no_std]

extern crate alloc;

pub mod design;
pub mod emulator;
mod error;
pub mod kernels;
pub mod linalg;
pub mod mcmc;
pub mod sensitivity;
pub mod sparse;
pub mod special;
pub mod testfns;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
