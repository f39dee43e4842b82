//! Simulation harness, benchmark split builder and report tooling around
//! [`gbsample_core`].

pub mod config;
pub mod harness;
pub mod report;
pub mod rng;
pub mod split;
