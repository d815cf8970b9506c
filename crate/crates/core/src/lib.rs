//! Finite-size key lengths for satellite BB84 with quantum-dot single-photon
//! and decoy-state weak coherent pulse sources, plus a pulse-level Monte
//! Carlo simulator used to cross-check the analytic models.

// `!(x >= 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod finite;
pub mod keyrate;
pub mod link;
pub mod montecarlo;
pub mod optimizer;
pub mod scenario;
pub mod source;

pub use error::{Error, Result};
pub use keyrate::ZeroKeyCause;
