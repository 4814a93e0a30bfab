//! Per-case outcome draws and the simulated SVES/probe implementations.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Normal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::PipelineCase;
use crate::report::{FixType, HarmType, ReportId, Subgroup};
use crate::sim::config::{FixOutcomeModel, ProbeModel, SimConfig};
use crate::sim::rng::{RngStreams, Stage};
use crate::triage::{Cluster, CoverageProbe, SteerabilityProbe, TriageDecision};
use crate::verification::SvesModel;

pub(crate) const LANE_DURATION: u8 = 0;
pub(crate) const LANE_RECURRENCE: u8 = 1;
pub(crate) const LANE_SATISFACTION: u8 = 2;
pub(crate) const LANE_ADOPTION: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub case_id: ReportId,
    pub subgroup: Subgroup,
    pub context: String,
    pub harm_type: HarmType,
    pub mandate_score: f64,
    pub mandated: bool,
    /// Fix assigned at triage, whether or not the mandate gate passed.
    pub candidate_fix: FixType,
    /// `Monitor`, or the fix deployed last (after any escalation).
    pub fix: TriageDecision,
    pub escalations: u32,
    pub latency_days: f64,
    pub recurred_30d: bool,
    pub satisfaction: f64,
    pub policy_adopted_6mo: bool,
    /// Hidden simulator label.
    pub true_need: bool,
}

/// Log-normal draw parameterised by its median.
pub fn lognormal_days<R: Rng>(median: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return median;
    }
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    median * (sigma * z).exp()
}

/// Normal draw truncated to `[1, 5]` by rejection.
pub fn truncated_satisfaction<R: Rng>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean.clamp(1.0, 5.0);
    }
    let normal = Normal::new(mean, sd).expect("finite sd");
    for _ in 0..10_000 {
        let x = normal.sample(rng);
        if (1.0..=5.0).contains(&x) {
            return x;
        }
    }
    mean.clamp(1.0, 5.0)
}

/// Per-case random streams for outcome draws.
pub struct OutcomeRngs {
    pub duration: ChaCha8Rng,
    pub recurrence: ChaCha8Rng,
    pub satisfaction: ChaCha8Rng,
    pub adoption: ChaCha8Rng,
}

impl OutcomeRngs {
    pub fn for_case(streams: &RngStreams, index: u32) -> Self {
        OutcomeRngs {
            duration: streams.stream(Stage::Outcomes, index, LANE_DURATION),
            recurrence: streams.stream(Stage::Outcomes, index, LANE_RECURRENCE),
            satisfaction: streams.stream(Stage::Outcomes, index, LANE_SATISFACTION),
            adoption: streams.stream(Stage::Outcomes, index, LANE_ADOPTION),
        }
    }
}

/// One implementation-plus-verification attempt, in days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptDuration {
    pub implementation: f64,
    pub verification: f64,
}

pub fn attempt_duration<R: Rng>(model: &FixOutcomeModel, shift: f64, rng: &mut R) -> AttemptDuration {
    let implementation = (lognormal_days(model.latency_median, model.latency_sigma, rng) + shift).max(0.0);
    let verification = lognormal_days(model.verification_median, model.verification_sigma, rng);
    AttemptDuration {
        implementation,
        verification,
    }
}

/// Fix-dependent outcome draws that do not depend on pipeline timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixOutcome {
    pub first_attempt: AttemptDuration,
    pub recurred_30d: bool,
    pub satisfaction: f64,
    pub policy_adopted_6mo: bool,
}

/// Draws latency of the first attempt, 30-day recurrence, first sign-off
/// satisfaction and six-month adoption for a case receiving `fix`.
pub fn simulate_outcomes(
    subgroup: Subgroup,
    fix: FixType,
    config: &SimConfig,
    rngs: &mut OutcomeRngs,
) -> FixOutcome {
    let model = config.outcome_model(fix);
    let modifier = config.modifier(subgroup);
    let first_attempt = attempt_duration(model, modifier.latency_shift, &mut rngs.duration);
    let p_recur = (model.recurrence * modifier.recurrence_multiplier).clamp(0.0, 1.0);
    let p_adopt = (model.adoption * modifier.adoption_multiplier).clamp(0.0, 1.0);
    FixOutcome {
        first_attempt,
        recurred_30d: rngs.recurrence.random::<f64>() < p_recur,
        satisfaction: truncated_satisfaction(
            model.satisfaction_mean,
            model.satisfaction_sd,
            &mut rngs.satisfaction,
        ),
        policy_adopted_6mo: rngs.adoption.random::<f64>() < p_adopt,
    }
}

/// SVES stand-in: re-renders `prompts` templated prompts and counts how many
/// still show the harm, each independently with the fix's post-mitigation
/// rate.
pub struct SimulatedSves<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
}

impl<'a> SimulatedSves<'a> {
    pub fn new(config: &'a SimConfig, streams: &RngStreams, index: u32) -> Self {
        SimulatedSves {
            config,
            rng: streams.stream(Stage::Verification, index, 0),
        }
    }
}

impl SvesModel for SimulatedSves<'_> {
    fn recurrence_rate(&mut self, case: &PipelineCase) -> f64 {
        let fix = case.fix.unwrap_or(FixType::CounterPrompt);
        let p = self.config.outcome_model(fix).sves_rate;
        let k = u64::from(self.config.sves_prompts);
        let hits = Binomial::new(k, p).expect("valid binomial").sample(&mut self.rng);
        hits as f64 / k as f64
    }
}

/// Cluster-keyed stochastic probes. Results depend only on the seed and the
/// cluster key, so repeated probing returns the same verdict.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedProbes {
    streams: RngStreams,
    model: ProbeModel,
}

impl SimulatedProbes {
    pub fn new(streams: RngStreams, model: ProbeModel) -> Self {
        SimulatedProbes { streams, model }
    }
}

impl SteerabilityProbe for SimulatedProbes {
    fn steerability(&mut self, cluster: &Cluster) -> f64 {
        let mut rng = self.streams.keyed(Stage::Probes, &format!("steer:{}", cluster.key));
        Beta::new(self.model.steerability_alpha, self.model.steerability_beta)
            .expect("positive beta parameters")
            .sample(&mut rng)
    }
}

impl CoverageProbe for SimulatedProbes {
    fn coverage_gap(&mut self, cluster: &Cluster) -> bool {
        let mut rng = self.streams.keyed(Stage::Probes, &format!("cover:{}", cluster.key));
        rng.random::<f64>() < self.model.coverage_gap_prob
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EngineConfig;
    use crate::triage::{probe_cluster, ClusterKey};

    fn degenerate(recurrence: f64, adoption: f64) -> SimConfig {
        let mut cfg = EngineConfig::default().simulation;
        for m in cfg.fix.values_mut() {
            m.latency_sigma = 0.0;
            m.verification_sigma = 0.0;
            m.satisfaction_sd = 0.0;
            m.recurrence = recurrence;
            m.adoption = adoption;
        }
        cfg.subgroup.clear();
        cfg
    }

    #[test]
    fn collapsed_distributions_are_exact() {
        let streams = RngStreams::new(11);
        for (rec, adopt) in [(0.0, 1.0), (1.0, 0.0)] {
            let cfg = degenerate(rec, adopt);
            for i in 0..50 {
                let mut rngs = OutcomeRngs::for_case(&streams, i);
                let out = simulate_outcomes(Subgroup::Women, FixType::DatasetEdit, &cfg, &mut rngs);
                let m = cfg.outcome_model(FixType::DatasetEdit);
                assert_eq!(out.first_attempt.implementation, m.latency_median);
                assert_eq!(out.first_attempt.verification, m.verification_median);
                assert_eq!(out.satisfaction, m.satisfaction_mean);
                assert_eq!(out.recurred_30d, rec == 1.0);
                assert_eq!(out.policy_adopted_6mo, adopt == 1.0);
            }
        }
    }

    #[test]
    fn satisfaction_stays_in_likert_range() {
        let mut rng = RngStreams::new(2).stream(Stage::Outcomes, 0, 9);
        for _ in 0..1000 {
            let x = truncated_satisfaction(4.9, 1.5, &mut rng);
            assert!((1.0..=5.0).contains(&x));
        }
    }

    #[test]
    fn simulated_probe_is_deterministic() {
        let cfg = EngineConfig::default();
        let cluster = Cluster {
            key: ClusterKey {
                context: "ctx-07".into(),
                harm_type: HarmType::Stereotyping,
            },
            members: vec![ReportId::new("R0001")],
            recurrence_count: 1,
        };
        let mut probes = SimulatedProbes::new(RngStreams::new(cfg.simulation.seed), cfg.simulation.probes);
        let mut other = probes;
        let first = probe_cluster(&cluster, Some(&mut probes), Some(&mut other), 0.5).unwrap();
        for _ in 0..100 {
            let mut a = probes;
            let mut b = probes;
            assert_eq!(probe_cluster(&cluster, Some(&mut a), Some(&mut b), 0.5).unwrap(), first);
        }
    }
}
