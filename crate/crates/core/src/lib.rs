//! Spin-boson ground states at desk scale: truncated Fock spaces, smooth
//! Feshbach maps, integral-kernel renormalization and Rayleigh-Schrödinger
//! coefficients, each cross-checked against brute-force diagonalization.

// `!(x > 0.0)` is the NaN-rejecting form used throughout the validators.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod feshbach;
pub mod fock;
pub mod initial;
pub mod kernel;
pub mod model;
pub mod perturbation;
pub mod quad;
pub mod rg;
