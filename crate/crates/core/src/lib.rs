//! Risk-aware set-based airfoil design.
//!
//! A run narrows a sampled population of CST airfoils through utility
//! filtering, sensitivity-guided refinement, a lower-tail CVaR risk filter,
//! pressure-distribution rating and human review.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod pipeline;
pub mod risk;
pub mod sampling;
pub mod score;
pub mod seed;
pub mod sensitivity;
pub mod sobol;

pub use error::{Error, Result};
