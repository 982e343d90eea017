//! Stochastic simulation of addressed Rydberg excitation in a ⁴⁰Ca⁺ ion
//! crystal: Zeeman structure, coherent 729 nm pulses, a kinetic Monte Carlo
//! model of VUV excitation and decay, crystal geometry and transport, a
//! small pulse-program language and line-scan analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atomic;
pub mod coherent;
pub mod config;
pub mod rydberg;
pub mod scan;
pub mod seed;
pub mod sequence;
pub mod transport;
pub mod units;

pub use config::ExperimentConfig;
pub use scan::ScanResult;
pub use sequence::{Engine, PulseProgram};
