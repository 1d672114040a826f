//! Penalized sharing ADMM (PS-ADMM) detection for massive MIMO uplink.
//!
//! Modules, bottom-up: [`numerics`] (dense complex linear algebra),
//! [`model`] (QAM, Gray mapping, binary decomposition, channel generation),
//! [`psadmm`] (the detector), [`baselines`] (ML, MMSE, Neumann, Gauss-Seidel,
//! box-constrained ADMM) and [`harness`] (Monte-Carlo BER, sweeps, audits).

pub mod baselines;
pub mod counting;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod psadmm;

pub use error::{Condition, Error, Result};
pub use numerics::C64;
