//! Geometry and invariants of first-order linear differential operators
//! `Δ = Σ Aⁱ ∂ᵢ + B` acting on sections of a rank-m vector bundle over an
//! n-dimensional chart.
//!
//! The pipeline runs pointwise: the symbol `(A¹,…,Aⁿ)` yields trace
//! invariants, a metric on the cotangent space and a canonical coframe
//! ([`symbol`]); the metric's Levi-Civita connection and a least-residual
//! bundle connection yield the connection associated with the operator and
//! its curvature ([`connection`]); invariant values over a grid form a model
//! that decides gauge equivalence ([`model`]).

// Index loops mirror the tensor notation; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod connection;
pub mod error;
pub mod field;
pub mod json;
pub mod kernel;
pub mod model;
pub mod par;
pub mod random;
pub mod symbol;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
