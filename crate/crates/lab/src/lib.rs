//! Experiment harness: configuration, seeded batch runs, persistence and the
//! statistical suite comparing discrete curve laws with the forward-simulated
//! driving SDE.

pub mod checks;
pub mod compare;
pub mod config;
pub mod io;
pub mod runs;
pub mod stats;
