//! Numerical sublinear expectations of spatial and spatial-temporal
//! G-white noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`sublinear`]: the scalar generating function `G`, closed-form G-normal
//!   moments and an axiom harness for expectation functionals.
//! * [`geometry`]: region algebra and Gram matrices of intersection measures.
//! * [`phi`]: the payoff language.
//! * [`gheat`]: finite-dimensional G-normal expectations via the G-heat
//!   equation.
//! * [`oracle`]: backward dynamic programming over volatility scenarios and
//!   Monte-Carlo lower bounds, used as an independent reference.
//! * [`field`]: the spatial white noise, its consistency checks, stochastic
//!   integrals of `L^2` functions and sampling diagnostics.
//! * [`spacetime`]: the layered spatial-temporal noise with conditional
//!   expectations and stochastic integrals.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod field;
pub mod geometry;
pub mod gheat;
pub mod grid;
pub mod oracle;
pub mod phi;
pub mod quadrature;
pub mod report;
pub mod spacetime;
pub mod sublinear;

pub use error::{Error, Result};
