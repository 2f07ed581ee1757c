//! Autonomous Hamiltonian certification and drift detection.
//!
//! A lab device is probed with random stabilizer product inputs, evolved for a
//! short time, and measured qubit by qubit in an adaptive single-qubit basis
//! built from a classically simulated hypothesis state. The resulting
//! accept/reject outcomes feed either a fixed-sample likelihood-ratio test
//! ([`certify`]) or an online CUSUM changepoint detector ([`monitor`]).

pub mod certify;
pub mod cusum;
pub mod dtmeas;
pub mod error;
pub mod monitor;
pub mod pauli;
pub mod presets;
pub mod qstate;
pub mod rng;

pub use error::{Error, Result};
