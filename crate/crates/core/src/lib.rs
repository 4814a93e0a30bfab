//! Collective-recourse engine: mandate scoring, triage and fix routing, the
//! case pipeline state machine, verification and closure, a calibrated
//! program simulator, and the analysis/reporting layer.

pub mod analysis;
pub mod case;
pub mod cli;
pub mod config;
pub mod eventlog;
pub mod mandate;
pub mod report;
pub mod sim;
pub mod triage;
pub mod verification;
