//! Pipeline cases and their state machine.
//!
//! A case is created by a `Submitted` event and then only moves along the
//! edges accepted by [`next_state_allowed`]. Every change is an appended
//! [`CaseEvent`], so the event list alone is enough to rebuild the case
//! (see [`PipelineCase::replay`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{FixType, Report, ReportId};

/// Payload key carrying the mandate score on the triage/monitoring edge.
pub const PAYLOAD_MANDATE_SCORE: &str = "mandate_score";
/// Payload key carrying comma-separated sibling report ids on the triage edge.
pub const PAYLOAD_SIBLINGS: &str = "siblings";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseState {
    Submitted,
    Monitoring,
    Triaged,
    FixSelected(FixType),
    Implemented,
    Verified { pass: bool },
    JuryReview,
    Closed,
    Reopened,
}

impl CaseState {
    /// Position along the main pipeline, used for "at or past" checks.
    fn stage(self) -> u8 {
        match self {
            CaseState::Submitted => 0,
            CaseState::Monitoring => 1,
            CaseState::Triaged => 2,
            CaseState::FixSelected(_) => 3,
            CaseState::Implemented => 4,
            CaseState::Verified { .. } => 5,
            CaseState::JuryReview => 6,
            CaseState::Closed => 7,
            CaseState::Reopened => 8,
        }
    }

    pub fn is_at_or_past_fix_selection(self) -> bool {
        self.stage() >= 3
    }
}

impl fmt::Display for CaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseState::FixSelected(fix) => write!(f, "FixSelected({})", fix.abbrev()),
            CaseState::Verified { pass } => {
                write!(f, "Verified({})", if *pass { "pass" } else { "fail" })
            }
            other => write!(f, "{other:?}"),
        }
    }
}

/// Whether `from -> to` is an edge of the pipeline graph.
pub fn next_state_allowed(from: CaseState, to: CaseState) -> bool {
    use CaseState::*;
    matches!(
        (from, to),
        (Submitted, Monitoring)
            | (Submitted, Triaged)
            | (Monitoring, Triaged)
            | (Triaged, FixSelected(_))
            | (FixSelected(_), Implemented)
            | (Implemented, Verified { .. })
            | (Verified { pass: true }, JuryReview)
            | (Verified { pass: false }, FixSelected(_))
            | (JuryReview, Closed)
            | (JuryReview, Reopened)
            | (Reopened, Implemented)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Actor {
    Reporter,
    TriageTeam,
    Vendor,
    Jury,
    Planner,
    System,
}

/// Non-transition records attached to a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Annotation {
    PolicyAdopted,
    PolicyDeclined,
    EscalationCapReached,
    ReopenCapReached,
    Note,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Transition(CaseState),
    Annotation(Annotation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvent {
    pub case_id: ReportId,
    /// Simulated day; fractional days allowed.
    pub day: f64,
    pub actor: Actor,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, String>,
}

impl CaseEvent {
    pub fn transition(case_id: ReportId, day: f64, actor: Actor, to: CaseState) -> Self {
        CaseEvent {
            case_id,
            day,
            actor,
            kind: EventKind::Transition(to),
            payload: BTreeMap::new(),
        }
    }

    pub fn annotation(case_id: ReportId, day: f64, actor: Actor, tag: Annotation) -> Self {
        CaseEvent {
            case_id,
            day,
            actor,
            kind: EventKind::Annotation(tag),
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.payload.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransitionError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: CaseState, to: CaseState },
    #[error("event at day {event_day} precedes last event at day {last_day}")]
    TimeOrder { last_day: f64, event_day: f64 },
    #[error("event for case {event} applied to case {case}")]
    WrongCase { case: ReportId, event: ReportId },
    #[error("transition to {to} requires payload `{key}`: {reason}")]
    Payload {
        to: CaseState,
        key: &'static str,
        reason: String,
    },
    #[error("a case must start with a Submitted transition")]
    NotSubmitted,
    #[error("no events to replay")]
    Empty,
}

/// A report (with clustered siblings) moving through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCase {
    pub report: Report,
    pub siblings: Vec<ReportId>,
    pub state: CaseState,
    pub mandate_score: Option<f64>,
    pub fix: Option<FixType>,
    pub events: Vec<CaseEvent>,
}

impl PipelineCase {
    /// Opens a case with its initial `Submitted` event.
    pub fn submit(report: Report, day: f64) -> Self {
        let event = CaseEvent::transition(
            report.id.clone(),
            day,
            Actor::Reporter,
            CaseState::Submitted,
        );
        PipelineCase {
            report,
            siblings: Vec::new(),
            state: CaseState::Submitted,
            mandate_score: None,
            fix: None,
            events: vec![event],
        }
    }

    pub fn id(&self) -> &ReportId {
        &self.report.id
    }

    pub fn last_day(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.day)
    }

    /// Consuming form of [`case_transition`].
    pub fn apply(mut self, event: CaseEvent) -> Result<Self, TransitionError> {
        if event.case_id != self.report.id {
            return Err(TransitionError::WrongCase {
                case: self.report.id.clone(),
                event: event.case_id,
            });
        }
        let last_day = self.last_day();
        // `!(a >= b)` also rejects NaN days.
        if !(event.day >= last_day) {
            return Err(TransitionError::TimeOrder {
                last_day,
                event_day: event.day,
            });
        }

        if let EventKind::Transition(to) = event.kind {
            if !next_state_allowed(self.state, to) {
                return Err(TransitionError::IllegalTransition {
                    from: self.state,
                    to,
                });
            }
            match to {
                CaseState::Monitoring | CaseState::Triaged => {
                    let score = payload_score(&event, to)?;
                    self.mandate_score = Some(score);
                    if let Some(siblings) = event.payload.get(PAYLOAD_SIBLINGS) {
                        self.siblings = siblings
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(ReportId::new)
                            .collect();
                    }
                }
                CaseState::FixSelected(fix) => self.fix = Some(fix),
                _ => {}
            }
            self.state = to;
        }
        self.events.push(event);
        Ok(self)
    }

    /// Rebuilds a case from its report and full event history.
    pub fn replay(report: Report, events: &[CaseEvent]) -> Result<Self, TransitionError> {
        let (first, rest) = events.split_first().ok_or(TransitionError::Empty)?;
        if first.kind != EventKind::Transition(CaseState::Submitted) {
            return Err(TransitionError::NotSubmitted);
        }
        if first.case_id != report.id {
            return Err(TransitionError::WrongCase {
                case: report.id.clone(),
                event: first.case_id.clone(),
            });
        }
        let mut case = PipelineCase::submit(report, first.day);
        case.events[0] = first.clone();
        rest.iter().cloned().try_fold(case, PipelineCase::apply)
    }
}

fn payload_score(event: &CaseEvent, to: CaseState) -> Result<f64, TransitionError> {
    let raw = event
        .payload
        .get(PAYLOAD_MANDATE_SCORE)
        .ok_or(TransitionError::Payload {
            to,
            key: PAYLOAD_MANDATE_SCORE,
            reason: "missing".into(),
        })?;
    let score: f64 = raw.parse().map_err(|e| TransitionError::Payload {
        to,
        key: PAYLOAD_MANDATE_SCORE,
        reason: format!("{e}"),
    })?;
    if !(0.0..=1.0).contains(&score) {
        return Err(TransitionError::Payload {
            to,
            key: PAYLOAD_MANDATE_SCORE,
            reason: format!("{score} outside [0, 1]"),
        });
    }
    Ok(score)
}

/// Applies one event to a case, returning the updated case.
pub fn case_transition(
    case: &PipelineCase,
    event: CaseEvent,
) -> Result<PipelineCase, TransitionError> {
    case.clone().apply(event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{HarmType, Subgroup};

    pub(crate) fn sample_report() -> Report {
        Report {
            id: ReportId::new("R1"),
            subgroup: Subgroup::Women,
            context: "ctx".into(),
            prompts: vec!["p".into()],
            evidence: vec![],
            harm_type: HarmType::Omission,
            severity: 0.5,
            reporters: 3,
            representativeness: 0.5,
            evidence_quality: 0.5,
        }
    }

    fn ev(day: f64, to: CaseState) -> CaseEvent {
        CaseEvent::transition(ReportId::new("R1"), day, Actor::System, to)
    }

    fn triage(day: f64) -> CaseEvent {
        ev(day, CaseState::Triaged).with(PAYLOAD_MANDATE_SCORE, 0.3)
    }

    #[test]
    fn submitted_to_triaged() {
        let case = PipelineCase::submit(sample_report(), 0.0);
        let next = case_transition(&case, triage(0.5)).unwrap();
        assert_eq!(next.state, CaseState::Triaged);
        assert_eq!(next.mandate_score, Some(0.3));
        assert_eq!(next.events.len(), 2);
        // original untouched
        assert_eq!(case.state, CaseState::Submitted);
    }

    fn walk_to_jury() -> PipelineCase {
        let case = PipelineCase::submit(sample_report(), 0.0);
        [
            triage(0.0),
            ev(0.0, CaseState::FixSelected(FixType::CounterPrompt)),
            ev(1.0, CaseState::Implemented),
            ev(2.0, CaseState::Verified { pass: true }),
            ev(9.0, CaseState::JuryReview),
        ]
        .into_iter()
        .try_fold(case, PipelineCase::apply)
        .unwrap()
    }

    #[test]
    fn jury_approval_closes() {
        let case = walk_to_jury();
        let closed = case_transition(&case, ev(9.0, CaseState::Closed)).unwrap();
        assert_eq!(closed.state, CaseState::Closed);
        assert_eq!(closed.fix, Some(FixType::CounterPrompt));
    }

    #[test]
    fn closed_is_terminal() {
        let closed = case_transition(&walk_to_jury(), ev(9.0, CaseState::Closed)).unwrap();
        for to in [
            CaseState::Submitted,
            CaseState::Triaged,
            CaseState::Implemented,
            CaseState::Reopened,
            CaseState::Closed,
        ] {
            assert!(matches!(
                case_transition(&closed, ev(10.0, to)),
                Err(TransitionError::IllegalTransition { .. })
            ));
        }
    }

    #[test]
    fn rejects_out_of_order_events() {
        let case = case_transition(&PipelineCase::submit(sample_report(), 5.0), triage(5.0));
        let case = case.unwrap();
        let err = case_transition(
            &case,
            ev(4.0, CaseState::FixSelected(FixType::DatasetEdit)),
        )
        .unwrap_err();
        assert!(matches!(err, TransitionError::TimeOrder { .. }));
    }

    #[test]
    fn triage_requires_score() {
        let case = PipelineCase::submit(sample_report(), 0.0);
        let err = case_transition(&case, ev(0.0, CaseState::Triaged)).unwrap_err();
        assert!(matches!(err, TransitionError::Payload { .. }));
    }

    #[test]
    fn failed_verification_escalates_to_fix_selection() {
        let case = PipelineCase::submit(sample_report(), 0.0);
        let case = [
            triage(0.0),
            ev(0.0, CaseState::FixSelected(FixType::CounterPrompt)),
            ev(1.0, CaseState::Implemented),
            ev(2.0, CaseState::Verified { pass: false }),
            ev(2.0, CaseState::FixSelected(FixType::NegativePrompt)),
        ]
        .into_iter()
        .try_fold(case, PipelineCase::apply)
        .unwrap();
        assert_eq!(case.fix, Some(FixType::NegativePrompt));
        assert!(case_transition(&case, ev(3.0, CaseState::JuryReview)).is_err());
    }

    #[test]
    fn replay_reproduces_case() {
        let case = case_transition(&walk_to_jury(), ev(10.0, CaseState::Reopened)).unwrap();
        let case = case_transition(
            &case,
            CaseEvent::annotation(ReportId::new("R1"), 10.0, Actor::Planner, Annotation::Note)
                .with("text", "rework"),
        )
        .unwrap();
        let replayed = PipelineCase::replay(case.report.clone(), &case.events).unwrap();
        assert_eq!(replayed, case);
    }

    #[test]
    fn replay_requires_submission_first() {
        let err = PipelineCase::replay(sample_report(), &[triage(0.0)]).unwrap_err();
        assert_eq!(err, TransitionError::NotSubmitted);
    }
}
