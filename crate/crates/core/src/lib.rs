//! Optimal measurement design for quantum-state estimation.
//!
//! The crate covers Fisher information of measurements and randomized
//! designs, SLD quantum Fisher information, the usual optimality criteria,
//! closed-form optimal designs for qubit models, and a certificate-producing
//! vertex-direction optimizer for the general case.

pub mod analytic;
pub mod criteria;
pub mod error;
pub mod fisher;
pub mod format;
pub mod linalg;
pub mod par;
pub mod quantum;
pub mod solver;

pub use error::{Error, Result};
