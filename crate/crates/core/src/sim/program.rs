//! End-to-end program run: generate, score, triage, mitigate, verify,
//! review and close every case.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::case::{
    Actor, Annotation, CaseEvent, CaseState, PipelineCase, PAYLOAD_MANDATE_SCORE, PAYLOAD_SIBLINGS,
};
use crate::config::EngineConfig;
use crate::mandate::{is_mandated, mandate_score, MandateVerdict};
use crate::report::{FixType, Report, ReportId};
use crate::sim::generate::{apply_jury_intervention, generate_program, truth_for, SyntheticReport};
use crate::sim::outcomes::{
    attempt_duration, simulate_outcomes, OutcomeRecord, OutcomeRngs, SimulatedProbes,
    SimulatedSves,
};
use crate::sim::rng::{RngStreams, Stage};
use crate::sim::SimError;
use crate::triage::{candidate_fix, cluster_reports, probe_cluster, select_fix, Cluster, TriageDecision};
use crate::verification::{closure_event, closure_gate, link_policy, run_sves, verification_event};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramResult {
    pub seed: u64,
    pub config: EngineConfig,
    pub reports: Vec<Report>,
    pub cases: Vec<PipelineCase>,
    pub outcomes: Vec<OutcomeRecord>,
}

impl ProgramResult {
    /// All case events merged into one log ordered by day. Ties keep case
    /// order, then per-case append order.
    pub fn event_log(&self) -> Vec<CaseEvent> {
        let mut events: Vec<(usize, usize, &CaseEvent)> = self
            .cases
            .iter()
            .enumerate()
            .flat_map(|(ci, case)| case.events.iter().enumerate().map(move |(ei, e)| (ci, ei, e)))
            .collect();
        events.sort_by(|a, b| a.2.day.total_cmp(&b.2.day).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        events.into_iter().map(|(_, _, e)| e.clone()).collect()
    }

    pub fn mandated_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.mandated).count()
    }

    /// Mandate scores and hidden labels, in case order.
    pub fn scored_labels(&self) -> (Vec<f64>, Vec<bool>) {
        self.outcomes
            .iter()
            .map(|o| (o.mandate_score, o.true_need))
            .unzip()
    }

    /// Scores recomputed after the rotating-jury intervention, paired with
    /// the unchanged hidden labels.
    pub fn scored_labels_with_jury(&self, delta_r: f64) -> Result<(Vec<f64>, Vec<bool>), SimError> {
        let raised = apply_jury_intervention(&self.reports, delta_r)?;
        let truth: BTreeMap<&ReportId, bool> =
            self.outcomes.iter().map(|o| (&o.case_id, o.true_need)).collect();
        raised
            .iter()
            .map(|r| {
                let score = mandate_score(r, &self.config.mandate)?;
                let label = *truth
                    .get(&r.id)
                    .ok_or_else(|| SimError::Config(format!("no outcome for report {}", r.id)))?;
                Ok((score, label))
            })
            .collect::<Result<Vec<_>, SimError>>()
            .map(|pairs| pairs.into_iter().unzip())
    }
}

struct CaseDriver<'a> {
    config: &'a EngineConfig,
    streams: RngStreams,
}

impl CaseDriver<'_> {
    fn run(
        &self,
        index: u32,
        synthetic: &SyntheticReport,
        cluster: &Cluster,
        verdict: MandateVerdict,
        candidate: FixType,
        decision: TriageDecision,
    ) -> Result<(PipelineCase, OutcomeRecord), SimError> {
        let sim = &self.config.simulation;
        let report = &synthetic.report;
        let id = report.id.clone();
        let t0 = synthetic.intake_day;
        let siblings = cluster
            .members
            .iter()
            .filter(|m| **m != id)
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join(",");

        let mut rngs = OutcomeRngs::for_case(&self.streams, index);
        let true_need = truth_for(index, synthetic.intensity, &sim.truth, &self.streams);
        let mut case = PipelineCase::submit(report.clone(), t0);

        let Some(initial_fix) = decision.fix() else {
            case = case.apply(
                CaseEvent::transition(id.clone(), t0, Actor::System, CaseState::Monitoring)
                    .with(PAYLOAD_MANDATE_SCORE, verdict.score)
                    .with(PAYLOAD_SIBLINGS, &siblings)
                    .with("threshold", verdict.threshold_used),
            )?;
            // Counterfactual outcomes under the candidate fix.
            let out = simulate_outcomes(report.subgroup, candidate, sim, &mut rngs);
            let record = OutcomeRecord {
                case_id: id,
                subgroup: report.subgroup,
                context: report.context.clone(),
                harm_type: report.harm_type,
                mandate_score: verdict.score,
                mandated: false,
                candidate_fix: candidate,
                fix: TriageDecision::Monitor,
                escalations: 0,
                latency_days: out.first_attempt.implementation + out.first_attempt.verification,
                recurred_30d: out.recurred_30d,
                satisfaction: out.satisfaction,
                policy_adopted_6mo: out.policy_adopted_6mo,
                true_need,
            };
            return Ok((case, record));
        };

        case = case.apply(
            CaseEvent::transition(id.clone(), t0, Actor::TriageTeam, CaseState::Triaged)
                .with(PAYLOAD_MANDATE_SCORE, verdict.score)
                .with(PAYLOAD_SIBLINGS, &siblings)
                .with("threshold", verdict.threshold_used)
                .with("cluster", &cluster.key),
        )?;
        case = case.apply(CaseEvent::transition(
            id.clone(),
            t0,
            Actor::TriageTeam,
            CaseState::FixSelected(initial_fix),
        ))?;

        let mut sves = SimulatedSves::new(sim, &self.streams, index);
        let mut jury_rng = self.streams.stream(Stage::Jury, index, 0);

        let mut fix = initial_fix;
        let mut t = t0;
        let mut escalations = 0u32;
        let mut reopenings = 0u32;
        let mut first: Option<crate::sim::outcomes::FixOutcome> = None;
        let mut latency: Option<f64> = None;
        let mut adopted: Option<bool> = None;

        loop {
            let duration = match first {
                None => {
                    let out = simulate_outcomes(report.subgroup, fix, sim, &mut rngs);
                    first = Some(out);
                    out.first_attempt
                }
                Some(_) => attempt_duration(sim.outcome_model(fix), 0.0, &mut rngs.duration),
            };
            t += duration.implementation;
            case = case.apply(CaseEvent::transition(
                id.clone(),
                t,
                Actor::Vendor,
                CaseState::Implemented,
            ))?;
            t += duration.verification;
            let result = run_sves(&case, &mut sves, &self.config.verification)?;
            let event = verification_event(&case, &result, t);
            case = case.apply(event)?;

            if !result.passed {
                if escalations >= sim.max_escalations {
                    case = case.apply(CaseEvent::annotation(
                        id.clone(),
                        t,
                        Actor::System,
                        Annotation::EscalationCapReached,
                    ))?;
                    break;
                }
                escalations += 1;
                fix = if escalations == sim.max_escalations {
                    FixType::RewardTweak
                } else {
                    fix.escalate()
                };
                case = case.apply(
                    CaseEvent::transition(id.clone(), t, Actor::TriageTeam, CaseState::FixSelected(fix))
                        .with("reason", "escalation"),
                )?;
                continue;
            }

            if latency.is_none() {
                latency = Some(t - t0);
                // Adoption is drawn against the fix that actually passed.
                let modifier = sim.modifier(report.subgroup);
                let p = (sim.outcome_model(fix).adoption * modifier.adoption_multiplier).clamp(0.0, 1.0);
                let adopt = if fix == initial_fix {
                    first.map(|o| o.policy_adopted_6mo).unwrap_or(false)
                } else {
                    rngs.adoption.random::<f64>() < p
                };
                adopted = Some(adopt);
                let event = link_policy(&case, adopt, t)?;
                case = case.apply(event)?;
            }

            t += sim.jury_delay_days;
            case = case.apply(CaseEvent::transition(id.clone(), t, Actor::Jury, CaseState::JuryReview))?;
            let satisfaction = if reopenings == 0 {
                first.map(|o| o.satisfaction).unwrap_or(5.0)
            } else {
                let m = sim.outcome_model(fix);
                crate::sim::outcomes::truncated_satisfaction(
                    m.satisfaction_mean,
                    m.satisfaction_sd,
                    &mut rngs.satisfaction,
                )
            };
            let approved = jury_rng.random::<f64>() < self.config.verification.jury_approval_prob;
            let closure = closure_gate(&result, satisfaction, approved, &self.config.verification)?;
            let event = closure_event(&case, &closure, t).with("satisfaction", satisfaction);
            case = case.apply(event)?;
            if closure.closed {
                break;
            }
            if reopenings >= sim.max_reopenings {
                case = case.apply(CaseEvent::annotation(
                    id.clone(),
                    t,
                    Actor::System,
                    Annotation::ReopenCapReached,
                ))?;
                break;
            }
            reopenings += 1;
        }

        let first = first.expect("at least one attempt");
        let recurred = if fix == initial_fix {
            first.recurred_30d
        } else {
            let modifier = sim.modifier(report.subgroup);
            let p = (sim.outcome_model(fix).recurrence * modifier.recurrence_multiplier).clamp(0.0, 1.0);
            rngs.recurrence.random::<f64>() < p
        };
        let record = OutcomeRecord {
            case_id: id,
            subgroup: report.subgroup,
            context: report.context.clone(),
            harm_type: report.harm_type,
            mandate_score: verdict.score,
            mandated: true,
            candidate_fix: candidate,
            fix: TriageDecision::Fix(fix),
            escalations,
            latency_days: latency.unwrap_or(t - t0),
            recurred_30d: recurred,
            satisfaction: first.satisfaction,
            policy_adopted_6mo: adopted.unwrap_or(false),
            true_need,
        };
        Ok((case, record))
    }
}

/// Runs the full synthetic program. Deterministic in `(config, seed)`.
pub fn run_program(config: &EngineConfig) -> Result<ProgramResult, SimError> {
    config.validate()?;
    let sim = &config.simulation;
    let streams = RngStreams::new(sim.seed);
    let synthetic = generate_program(sim, &streams)?;
    let reports: Vec<Report> = synthetic.iter().map(|s| s.report.clone()).collect();

    let clusters = cluster_reports(&reports);
    let mut probes = SimulatedProbes::new(streams, sim.probes);
    let mut coverage = probes;
    let mut cluster_of: BTreeMap<&ReportId, usize> = BTreeMap::new();
    let mut probe_results = Vec::with_capacity(clusters.len());
    for (ci, cluster) in clusters.iter().enumerate() {
        for member in &cluster.members {
            cluster_of.insert(member, ci);
        }
        probe_results.push(probe_cluster(
            cluster,
            Some(&mut probes),
            Some(&mut coverage),
            config.triage.probe_threshold,
        )?);
    }

    let driver = CaseDriver {
        config,
        streams,
    };
    let mut cases = Vec::with_capacity(reports.len());
    let mut outcomes = Vec::with_capacity(reports.len());
    for (index, s) in synthetic.iter().enumerate() {
        let report = &s.report;
        let verdict = is_mandated(report, &config.mandate)?;
        let ci = cluster_of[&report.id];
        let cluster = &clusters[ci];
        let probe = &probe_results[ci];
        let candidate = candidate_fix(
            probe,
            report.harm_type,
            report.severity,
            cluster.recurrence_count,
            &config.triage,
        );
        let decision = select_fix(
            &verdict,
            probe,
            report.harm_type,
            report.severity,
            cluster.recurrence_count,
            &config.triage,
        );
        let (case, outcome) = driver.run(index as u32, s, cluster, verdict, candidate, decision)?;
        cases.push(case);
        outcomes.push(outcome);
    }

    Ok(ProgramResult {
        seed: sim.seed,
        config: config.clone(),
        reports,
        cases,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::EventKind;

    #[test]
    fn zero_severity_means_all_monitor() {
        let mut config = EngineConfig::default();
        config.simulation.severity.intercept = -1e6;
        let program = run_program(&config).unwrap();
        assert_eq!(program.outcomes.len(), 240);
        assert!(program.reports.iter().all(|r| r.severity == 0.0));
        assert!(program.outcomes.iter().all(|o| o.fix == TriageDecision::Monitor));
        assert!(program.cases.iter().all(|c| c.state == CaseState::Monitoring && c.fix.is_none()));
    }

    #[test]
    fn deterministic_runs() {
        let config = EngineConfig::default();
        let a = run_program(&config).unwrap();
        let b = run_program(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn mandated_cases_terminate() {
        let program = run_program(&EngineConfig::default()).unwrap();
        for (case, outcome) in program.cases.iter().zip(&program.outcomes) {
            assert_eq!(case.id(), &outcome.case_id);
            if outcome.mandated {
                let ended = matches!(case.state, CaseState::Closed | CaseState::Reopened)
                    || case.events.iter().any(|e| {
                        e.kind == EventKind::Annotation(Annotation::EscalationCapReached)
                    });
                assert!(ended, "case {} ended in {}", case.id(), case.state);
                assert!(case.mandate_score.is_some());
                assert!(case.fix.is_some());
            } else {
                assert_eq!(case.state, CaseState::Monitoring);
            }
            assert!(outcome.latency_days >= 0.0);
            assert!((1.0..=5.0).contains(&outcome.satisfaction));
        }
    }

    #[test]
    fn latency_matches_event_history() {
        let program = run_program(&EngineConfig::default()).unwrap();
        for (case, outcome) in program.cases.iter().zip(&program.outcomes) {
            let Some(pass) = case
                .events
                .iter()
                .find(|e| e.kind == EventKind::Transition(CaseState::Verified { pass: true }))
            else {
                continue;
            };
            let intake = case.events[0].day;
            assert!((pass.day - intake - outcome.latency_days).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_cases_passed_every_gate() {
        let program = run_program(&EngineConfig::default()).unwrap();
        for case in &program.cases {
            for (i, e) in case.events.iter().enumerate() {
                if e.kind == EventKind::Transition(CaseState::Closed) {
                    assert_eq!(e.payload.get("failed_gates").map(String::as_str), Some(""));
                    assert_eq!(
                        case.events[i - 1].kind,
                        EventKind::Transition(CaseState::JuryReview)
                    );
                }
            }
        }
    }
}
