//! Simulation and audit toolkit for local-energy decay of 2-D waves in
//! variable media, `u_tt = ∇·(K(x)∇u)`.

// `!(x > 0.0)` is used on purpose so that NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coefficients;
pub mod diagnostics;
pub mod field;
pub mod initial_data;
pub mod potential;
pub mod solver;
pub mod weights;
