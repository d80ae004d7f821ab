//! Prognostics and health management for electromechanical actuators.
//!
//! Offline: simulate fault-seeded telemetry, compress it with POD and a
//! self-organizing sensor schedule, train a fault-identification network and
//! a health-assessment surrogate. Online: compress a measured signal, recover
//! its POD coefficients, identify the fault vector and integrate damage growth
//! to a remaining-useful-life estimate.

pub mod assess;
pub mod bundle;
pub mod config;
pub mod doe;
pub mod error;
pub mod fault;
pub mod gappy;
pub mod matrix_io;
pub mod mlp;
pub mod pipeline;
pub mod pod;
pub mod report;
pub mod rul;
pub mod seed;
pub mod sim;
pub mod som;
pub mod svm;

pub use error::{PhmError, Result};
pub use fault::FaultVector;
pub use nalgebra;
