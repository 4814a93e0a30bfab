//! Synthetic year-one program simulator.

pub mod config;
pub mod generate;
pub mod outcomes;
pub mod program;
pub mod rng;

use thiserror::Error;

use crate::case::TransitionError;
use crate::mandate::MandateError;
use crate::triage::TriageError;
use crate::verification::VerificationError;

pub use config::{
    FixOutcomeModel, LatentBeta, ProbeModel, ReporterModel, SimConfig, SubgroupModifier,
    TruthModel,
};
pub use generate::{apply_jury_intervention, draw_truth, generate_program, generate_reports, SyntheticReport};
pub use outcomes::{simulate_outcomes, OutcomeRecord};
pub use program::{run_program, ProgramResult};
pub use rng::{RngStreams, Stage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("delta_r must be non-negative, got {0}")]
    Domain(f64),
    #[error(transparent)]
    Mandate(#[from] MandateError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
}
