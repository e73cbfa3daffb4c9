#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Multiscale spectral generalized finite elements for singularly perturbed
//! reaction-diffusion problems `-ε²∇·(A∇u) + u = f` on the unit square.

pub mod coarse;
pub mod coefficient;
pub mod decomposition;
pub mod error;
pub mod fem;
pub mod harness;
pub mod local;
pub mod validation;

pub use error::{MsgfemError, Result};
