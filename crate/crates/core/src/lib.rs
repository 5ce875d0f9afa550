//! Pseudospectral solver and analysis toolkit for the nonlinear Schrödinger
//! equation (NLS), its Schrödinger–Helmholtz regularization (SH) and the
//! Schrödinger–Newton system (SN).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod groundstate;
pub mod harness;
mod par;
pub mod spectral;
pub mod stepper;
pub mod system;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
