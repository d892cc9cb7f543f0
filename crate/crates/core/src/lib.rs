//! Desk-scale laboratory for in-context learning with attention models.
//!
//! Two settings are covered: rank-constrained linear self-attention on
//! Gaussian linear regression ([`regression`]) and a two-layer multi-head
//! ReLU attention model on sparse parity ([`parity`]). Every closed-form
//! optimum and loss formula is paired with an independent numerical check
//! (Monte Carlo, gradient descent or exhaustive enumeration). [`harness`]
//! backs the `icl-lab` binary: configs, sweeps, verification and plots.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod numerics;
pub mod regression;
pub mod parity;
pub mod harness;
