//! Homogenized coefficients and finite-volume solvers for the 1D Keller-Segel
//! chemotaxis system with stationary random coefficients.
//!
//! * [`random_fields`]: seeded stationary ergodic coefficient fields.
//! * [`cell_solver`]: periodization on `[0, ρ]` and the two periodic cell problems.
//! * [`effective`]: Monte-Carlo estimates of `D*`, `χ*` and sweeps over `ρ`.
//! * [`ks_solver`]: the microscopic and homogenized time-dependent problems.
//! * [`harness`]: configuration, experiment drivers and CSV/report output.

// Negated float comparisons are used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_solver;
pub mod effective;
pub mod error;
pub mod harness;
pub mod ks_solver;
pub mod random_fields;

pub use error::{Error, Result};
