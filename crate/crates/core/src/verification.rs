//! SVES verification, the closure gate and the planning-link hook.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Actor, Annotation, CaseEvent, CaseState, PipelineCase};
use crate::report::HarmType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationPolicy {
    /// Maximum tolerated recurrence rate per harm type (inclusive).
    pub tolerance: BTreeMap<HarmType, f64>,
    /// Minimum subgroup satisfaction (1-5 Likert proxy, inclusive).
    pub theta_sat: f64,
    /// Probability that the jury approves a passed verification.
    pub jury_approval_prob: f64,
    pub window_days: u32,
}

impl Default for VerificationPolicy {
    fn default() -> Self {
        let tolerance = HarmType::ALL
            .into_iter()
            .map(|h| {
                let tol = match h {
                    HarmType::Stereotyping | HarmType::ToxicMotif => 0.15,
                    HarmType::Omission | HarmType::Erasure | HarmType::Misrepresentation => 0.20,
                };
                (h, tol)
            })
            .collect();
        VerificationPolicy {
            tolerance,
            theta_sat: 3.5,
            jury_approval_prob: 0.9,
            window_days: 30,
        }
    }
}

impl VerificationPolicy {
    pub fn tolerance_for(&self, harm: HarmType) -> f64 {
        // Missing entries fall back to the strictest default.
        self.tolerance.get(&harm).copied().unwrap_or(0.15)
    }

    pub fn validate(&self) -> Result<(), VerificationError> {
        for (harm, tol) in &self.tolerance {
            if !(0.0..=1.0).contains(tol) {
                return Err(VerificationError::Config(format!(
                    "tolerance for {harm} = {tol} is outside [0, 1]"
                )));
            }
        }
        if !(1.0..=5.0).contains(&self.theta_sat) {
            return Err(VerificationError::Config(format!(
                "theta_sat = {} is outside [1, 5]",
                self.theta_sat
            )));
        }
        if !(0.0..=1.0).contains(&self.jury_approval_prob) {
            return Err(VerificationError::Config(format!(
                "jury_approval_prob = {} is outside [0, 1]",
                self.jury_approval_prob
            )));
        }
        if self.window_days == 0 {
            return Err(VerificationError::Config("window_days must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("case is in state {actual}, expected {expected}")]
    State {
        expected: &'static str,
        actual: CaseState,
    },
    #[error("satisfaction {0} is outside [1, 5]")]
    Range(f64),
    #[error("{0}")]
    Config(String),
}

/// Source of post-mitigation recurrence estimates for a case.
pub trait SvesModel {
    fn recurrence_rate(&mut self, case: &PipelineCase) -> f64;
}

/// SVES model returning a fixed rate.
#[derive(Debug, Clone, Copy)]
pub struct FixedSves(pub f64);

impl SvesModel for FixedSves {
    fn recurrence_rate(&mut self, _case: &PipelineCase) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub recurrence_rate: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub window_days: u32,
}

pub fn run_sves(
    case: &PipelineCase,
    model: &mut dyn SvesModel,
    policy: &VerificationPolicy,
) -> Result<VerificationResult, VerificationError> {
    if case.state != CaseState::Implemented {
        return Err(VerificationError::State {
            expected: "Implemented",
            actual: case.state,
        });
    }
    let rate = model.recurrence_rate(case).clamp(0.0, 1.0);
    let tolerance = policy.tolerance_for(case.report.harm_type);
    Ok(VerificationResult {
        recurrence_rate: rate,
        tolerance,
        passed: rate <= tolerance,
        window_days: policy.window_days,
    })
}

/// The transition event recording a verification outcome.
pub fn verification_event(case: &PipelineCase, result: &VerificationResult, day: f64) -> CaseEvent {
    CaseEvent::transition(
        case.id().clone(),
        day,
        Actor::System,
        CaseState::Verified {
            pass: result.passed,
        },
    )
    .with("recurrence_rate", result.recurrence_rate)
    .with("tolerance", result.tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClosureGate {
    RecurrenceGate,
    SatisfactionGate,
    JuryGate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureDecision {
    pub closed: bool,
    /// Gates that failed; empty iff closed.
    pub reasons: Vec<ClosureGate>,
}

pub fn closure_gate(
    verification: &VerificationResult,
    satisfaction: f64,
    jury_approved: bool,
    policy: &VerificationPolicy,
) -> Result<ClosureDecision, VerificationError> {
    if !(1.0..=5.0).contains(&satisfaction) {
        return Err(VerificationError::Range(satisfaction));
    }
    let mut reasons = Vec::new();
    if !verification.passed {
        reasons.push(ClosureGate::RecurrenceGate);
    }
    if satisfaction < policy.theta_sat {
        reasons.push(ClosureGate::SatisfactionGate);
    }
    if !jury_approved {
        reasons.push(ClosureGate::JuryGate);
    }
    Ok(ClosureDecision {
        closed: reasons.is_empty(),
        reasons,
    })
}

/// The jury's transition out of review: `Closed` when every gate passed,
/// `Reopened` otherwise. Failing gates are recorded in the payload.
pub fn closure_event(case: &PipelineCase, decision: &ClosureDecision, day: f64) -> CaseEvent {
    let to = if decision.closed {
        CaseState::Closed
    } else {
        CaseState::Reopened
    };
    let reasons = decision
        .reasons
        .iter()
        .map(|g| format!("{g:?}"))
        .collect::<Vec<_>>()
        .join(",");
    CaseEvent::transition(case.id().clone(), day, Actor::Jury, to).with("failed_gates", reasons)
}

/// Records whether planners adopted a related change within the adoption
/// window. Only valid for a case whose verification passed.
pub fn link_policy(
    case: &PipelineCase,
    adoption: bool,
    day: f64,
) -> Result<CaseEvent, VerificationError> {
    if case.state != (CaseState::Verified { pass: true }) {
        return Err(VerificationError::State {
            expected: "Verified(pass)",
            actual: case.state,
        });
    }
    let tag = if adoption {
        Annotation::PolicyAdopted
    } else {
        Annotation::PolicyDeclined
    };
    Ok(CaseEvent::annotation(case.id().clone(), day, Actor::Planner, tag))
}
