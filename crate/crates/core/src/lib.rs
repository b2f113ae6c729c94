//! Circuit simulation and regulation analysis for a vehicle alternator
//! voltage stabilizer.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod devices;
pub mod engine;
pub mod netlist;
