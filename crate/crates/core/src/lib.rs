//! Numerical information geometry.
//!
//! The crate is organised by subject:
//!
//! | module | contents |
//! |--------|----------|
//! | [`surfaces`] | fundamental forms, Christoffel symbols, Riemann tensor, curvature scalars and geodesics of parameterised surfaces |
//! | [`models`] | univariate Gaussians, Gaussian mixtures, finite distributions, exponential families, sampling and MLE |
//! | [`infogeo`] | score, Fisher information estimators, entropy, KL and Bregman divergences, e/m geodesics, dually flat structures |
//! | [`emcore`] | the EM algorithm, the evidence decomposition, maximum entropy, e/m projections and the geometric em loop |
//! | [`natgrad`] | a dense feedforward network with SGD, natural-gradient and component-wise natural-gradient steps |
//! | [`cli`] | batch commands producing JSON result envelopes (used by the `igeom` binary) |
//!
//! Logarithms are natural throughout. Randomness always flows from an explicit
//! `u64` seed through [`rng::stream`], so every stochastic routine is
//! reproducible bit for bit.

// Guards such as `!(x > 0.0)` are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod emcore;
mod error;
pub mod infogeo;
pub mod models;
pub mod natgrad;
pub mod quadrature;
pub mod rng;
pub mod surfaces;

pub use error::{Error, Result};
