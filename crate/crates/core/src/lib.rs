//! Solver suite for coupled non-Markovian open-quantum-system dynamics.
//!
//! The crate trains forked physics-informed networks on the coupled
//! auxiliary-operator equations and the reduced-density-matrix master
//! equation, validates them against a fourth-order Runge–Kutta reference
//! integrator, and evaluates error, fidelity, coherence, and concurrence
//! metrics. See the `cli` crate for the command-line front end.

pub mod autodiff;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};
