//! Acquisition impact model.
//!
//! Estimates how many signups each content launch brought in, attributes
//! those incremental signups to individual subscribers, and checks the
//! estimates for internal consistency.

pub mod attribution;
pub mod baseline_model;
pub mod domain_io;
pub mod error;
pub mod estimator;
pub mod simulator;
pub mod validation;

pub use error::{AimError, Result};
