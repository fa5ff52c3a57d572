//! Molecular-dynamics simulation of sympathetically cooled ion crystals in a
//! linear Paul trap.

pub mod diagnostics;
pub mod error;
pub mod forces;
pub mod integrator;
pub mod model;
pub mod oracles;
pub mod output;
pub mod scenario;
pub mod simulation;
