//! Consensus under discontinuous protocols: Filippov set-valued maps,
//! sliding-mode detection, simulation and structural analysis.

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod filippov;
pub mod graph;
pub mod lp;
pub mod nonlin;
pub mod protocol;
pub mod scenario;
