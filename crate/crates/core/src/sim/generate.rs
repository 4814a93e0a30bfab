//! Synthetic report generation and the hidden true-need label.
//!
//! Each report carries a latent harm intensity `z ~ N(0, 1)`. Severity,
//! representativeness and evidence quality are Beta draws whose means rise
//! with `z`, and the hidden label is `Bernoulli(logistic(alpha * z + beta))`,
//! so the mandate score is informative about true need without being a
//! deterministic function of it. Reporter counts are independent of `z`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Geometric, StandardNormal};

use crate::report::{Evidence, HarmType, Report, ReportId, Subgroup};
use crate::sim::config::{LatentBeta, SimConfig, TruthModel};
use crate::sim::rng::{RngStreams, Stage};
use crate::sim::SimError;

const LANE_INTENSITY: u8 = 0;
const LANE_SEVERITY: u8 = 1;
const LANE_REPRESENTATIVENESS: u8 = 2;
const LANE_EVIDENCE: u8 = 3;
const LANE_REPORTERS: u8 = 4;
const LANE_CONTEXT: u8 = 5;
const LANE_HARM: u8 = 6;
const LANE_INTAKE: u8 = 7;

/// A generated report together with the simulator-only latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticReport {
    pub report: Report,
    pub intensity: f64,
    pub intake_day: f64,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn latent_beta<R: Rng>(field: &LatentBeta, intensity: f64, subgroup: Subgroup, rng: &mut R) -> f64 {
    let offset = field.subgroup_offset.get(&subgroup).copied().unwrap_or(0.0);
    let mean = logistic(field.intercept + field.slope * intensity + offset);
    // A saturated mean collapses the Beta to a point mass.
    if mean <= 0.0 || mean >= 1.0 {
        return mean.clamp(0.0, 1.0);
    }
    let k = field.concentration;
    let beta = Beta::new(k * mean, k * (1.0 - mean)).expect("positive beta parameters");
    beta.sample(rng).clamp(0.0, 1.0)
}

fn pick_harm(weights: &[(HarmType, f64)], u: f64) -> HarmType {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    for &(harm, w) in weights {
        acc += w / total;
        if u < acc {
            return harm;
        }
    }
    weights.last().map(|(h, _)| *h).unwrap_or(HarmType::Omission)
}

/// Generates the stratified report population: exactly
/// `subgroup_counts[g]` reports per subgroup, in subgroup order.
pub fn generate_program(
    config: &SimConfig,
    streams: &RngStreams,
) -> Result<Vec<SyntheticReport>, SimError> {
    config.validate()?;
    let weights: Vec<(HarmType, f64)> = config
        .harm_weights
        .iter()
        .map(|(h, w)| (*h, *w))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let reporters = Geometric::new(config.reporters.success_prob)
        .map_err(|e| SimError::Config(format!("reporters: {e}")))?;

    let mut out = Vec::with_capacity(config.n_reports as usize);
    let mut index: u32 = 0;
    for (&subgroup, &count) in &config.subgroup_counts {
        for _ in 0..count {
            let lane = |l| streams.stream(Stage::Reports, index, l);
            let intensity: f64 = lane(LANE_INTENSITY).sample(StandardNormal);
            let severity = latent_beta(&config.severity, intensity, subgroup, &mut lane(LANE_SEVERITY));
            let representativeness = latent_beta(
                &config.representativeness,
                intensity,
                subgroup,
                &mut lane(LANE_REPRESENTATIVENESS),
            );
            let evidence_quality =
                latent_beta(&config.evidence_quality, intensity, subgroup, &mut lane(LANE_EVIDENCE));
            let extra = reporters.sample(&mut lane(LANE_REPORTERS));
            let n = u32::try_from(extra.saturating_add(1)).unwrap_or(u32::MAX);
            let context_idx = lane(LANE_CONTEXT).random_range(0..config.n_contexts);
            let harm_type = pick_harm(&weights, lane(LANE_HARM).random::<f64>());
            let intake_day = lane(LANE_INTAKE).random::<f64>() * config.intake_window_days;

            let id = ReportId::new(format!("R{:04}", index + 1));
            let context = format!("ctx-{:02}", context_idx + 1);
            let report = Report {
                prompts: vec![format!(
                    "{} streetscape in {context} as experienced by {}",
                    harm_type.as_str().to_lowercase(),
                    subgroup.label()
                )],
                evidence: vec![Evidence {
                    kind: "sves-sample".into(),
                    detail: format!("synthetic://{id}"),
                }],
                id,
                subgroup,
                context,
                harm_type,
                severity,
                reporters: n,
                representativeness,
                evidence_quality,
            };
            out.push(SyntheticReport {
                report,
                intensity,
                intake_day,
            });
            index += 1;
        }
    }
    Ok(out)
}

pub fn generate_reports(config: &SimConfig, streams: &RngStreams) -> Result<Vec<Report>, SimError> {
    Ok(generate_program(config, streams)?
        .into_iter()
        .map(|s| s.report)
        .collect())
}

/// Hidden true-need label for one report.
pub fn draw_truth<R: Rng>(intensity: f64, model: &TruthModel, rng: &mut R) -> bool {
    let p = logistic(model.alpha * intensity + model.beta);
    rng.random::<f64>() < p
}

pub(crate) fn truth_for(index: u32, intensity: f64, model: &TruthModel, streams: &RngStreams) -> bool {
    draw_truth(intensity, model, &mut streams.stream(Stage::Truth, index, 0))
}

/// Rotating-jury intervention: raises every report's representativeness by
/// `delta_r`, clamped to 1.
pub fn apply_jury_intervention(reports: &[Report], delta_r: f64) -> Result<Vec<Report>, SimError> {
    if !(delta_r >= 0.0) {
        return Err(SimError::Domain(delta_r));
    }
    Ok(reports
        .iter()
        .map(|r| Report {
            representativeness: (r.representativeness + delta_r).min(1.0),
            ..r.clone()
        })
        .collect())
}
