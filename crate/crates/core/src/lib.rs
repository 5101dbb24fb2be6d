//! Debiasing of pooled samples drawn from several biased sources.
//!
//! Each source `k` samples from `p_k = ω_k p_test / Ω_k` with a known biasing
//! function `ω_k` and unknown normalizer `Ω_k`. The normalizers are estimated
//! by minimizing a convex objective ([`solver`]), turned into per-observation
//! weights ([`weights`]) and used for weighted empirical risk minimization
//! ([`harness`]).

// `!(x >= 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod error;
pub mod estimators;
pub mod generators;
pub mod harness;
pub mod io;
pub mod model;
pub mod omega;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
