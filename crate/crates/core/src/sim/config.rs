use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::report::{FixType, HarmType, Subgroup};
use crate::sim::SimError;

/// Parameters of the synthetic program. Every distribution parameter lives
/// here so the shipped defaults are the calibrated reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_reports: u32,
    /// Number of distinct urban contexts reports are spread across.
    pub n_contexts: u32,
    /// Reports arrive uniformly over this many days.
    pub intake_window_days: f64,
    /// Representativeness gain from the rotating-jury intervention.
    pub delta_r: f64,
    pub max_escalations: u32,
    pub max_reopenings: u32,
    pub jury_delay_days: f64,
    /// Templated prompts per SVES run.
    pub sves_prompts: u32,
    pub subgroup_counts: BTreeMap<Subgroup, u32>,
    pub harm_weights: BTreeMap<HarmType, f64>,
    pub truth: TruthModel,
    pub severity: LatentBeta,
    pub representativeness: LatentBeta,
    pub evidence_quality: LatentBeta,
    pub reporters: ReporterModel,
    pub probes: ProbeModel,
    pub fix: BTreeMap<FixType, FixOutcomeModel>,
    pub subgroup: BTreeMap<Subgroup, SubgroupModifier>,
}

/// `P(true need) = logistic(alpha * intensity + beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthModel {
    pub alpha: f64,
    pub beta: f64,
}

/// A Beta-distributed field whose mean is tied to the latent harm
/// intensity: `mean = logistic(intercept + slope * intensity + offset[g])`,
/// `Beta(concentration * mean, concentration * (1 - mean))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentBeta {
    pub intercept: f64,
    pub slope: f64,
    pub concentration: f64,
    #[serde(default)]
    pub subgroup_offset: BTreeMap<Subgroup, f64>,
}

/// Reporter count `n = 1 + Geometric(success_prob)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReporterModel {
    pub success_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeModel {
    /// Steerability score per cluster is `Beta(alpha, beta)`.
    pub steerability_alpha: f64,
    pub steerability_beta: f64,
    pub coverage_gap_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixOutcomeModel {
    /// Log-normal implementation time (days).
    pub latency_median: f64,
    pub latency_sigma: f64,
    /// Log-normal SVES re-run time (days).
    pub verification_median: f64,
    pub verification_sigma: f64,
    /// 30-day recurrence probability before subgroup modulation.
    pub recurrence: f64,
    /// Satisfaction ~ Normal(mean, sd) truncated to [1, 5].
    pub satisfaction_mean: f64,
    pub satisfaction_sd: f64,
    /// Six-month policy adoption probability before subgroup modulation.
    pub adoption: f64,
    /// Per-prompt harm rate on the post-fix SVES.
    pub sves_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupModifier {
    pub recurrence_multiplier: f64,
    /// Added to the first implementation time (days).
    pub latency_shift: f64,
    pub adoption_multiplier: f64,
}

impl Default for SubgroupModifier {
    fn default() -> Self {
        SubgroupModifier {
            recurrence_multiplier: 1.0,
            latency_shift: 0.0,
            adoption_multiplier: 1.0,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {p} is not a probability")))
    }
}

fn positive(name: &str, x: f64) -> Result<(), SimError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {x} must be positive")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<(), SimError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {x} must be non-negative")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let total: u64 = self.subgroup_counts.values().map(|&c| u64::from(c)).sum();
        if total != u64::from(self.n_reports) {
            return Err(SimError::Config(format!(
                "subgroup_counts sum to {total} but n_reports = {}",
                self.n_reports
            )));
        }
        if self.n_contexts == 0 {
            return Err(SimError::Config("n_contexts must be at least 1".into()));
        }
        non_negative("intake_window_days", self.intake_window_days)?;
        non_negative("delta_r", self.delta_r)?;
        non_negative("jury_delay_days", self.jury_delay_days)?;
        if self.sves_prompts == 0 {
            return Err(SimError::Config("sves_prompts must be at least 1".into()));
        }
        if self.n_reports > 0 {
            let weight: f64 = self.harm_weights.values().sum();
            if !(weight > 0.0) || self.harm_weights.values().any(|w| !(*w >= 0.0)) {
                return Err(SimError::Config(
                    "harm_weights must be non-negative with a positive sum".into(),
                ));
            }
        }
        for (name, field) in [
            ("severity", &self.severity),
            ("representativeness", &self.representativeness),
            ("evidence_quality", &self.evidence_quality),
        ] {
            positive(&format!("{name}.concentration"), field.concentration)?;
        }
        if !(self.reporters.success_prob > 0.0 && self.reporters.success_prob <= 1.0) {
            return Err(SimError::Config(format!(
                "reporters.success_prob = {} must be in (0, 1]",
                self.reporters.success_prob
            )));
        }
        positive("probes.steerability_alpha", self.probes.steerability_alpha)?;
        positive("probes.steerability_beta", self.probes.steerability_beta)?;
        probability("probes.coverage_gap_prob", self.probes.coverage_gap_prob)?;
        for fix in FixType::ALL {
            let m = self
                .fix
                .get(&fix)
                .ok_or_else(|| SimError::Config(format!("missing outcome model for {fix}")))?;
            positive(&format!("fix.{fix}.latency_median"), m.latency_median)?;
            non_negative(&format!("fix.{fix}.latency_sigma"), m.latency_sigma)?;
            positive(&format!("fix.{fix}.verification_median"), m.verification_median)?;
            non_negative(&format!("fix.{fix}.verification_sigma"), m.verification_sigma)?;
            probability(&format!("fix.{fix}.recurrence"), m.recurrence)?;
            probability(&format!("fix.{fix}.adoption"), m.adoption)?;
            probability(&format!("fix.{fix}.sves_rate"), m.sves_rate)?;
            non_negative(&format!("fix.{fix}.satisfaction_sd"), m.satisfaction_sd)?;
            if !(1.0..=5.0).contains(&m.satisfaction_mean) {
                return Err(SimError::Config(format!(
                    "fix.{fix}.satisfaction_mean = {} is outside [1, 5]",
                    m.satisfaction_mean
                )));
            }
        }
        for (g, m) in &self.subgroup {
            non_negative(&format!("subgroup.{g}.recurrence_multiplier"), m.recurrence_multiplier)?;
            non_negative(&format!("subgroup.{g}.adoption_multiplier"), m.adoption_multiplier)?;
            if !m.latency_shift.is_finite() {
                return Err(SimError::Config(format!("subgroup.{g}.latency_shift must be finite")));
            }
        }
        Ok(())
    }

    pub fn outcome_model(&self, fix: FixType) -> &FixOutcomeModel {
        // validate() guarantees presence.
        &self.fix[&fix]
    }

    pub fn modifier(&self, subgroup: Subgroup) -> SubgroupModifier {
        self.subgroup.get(&subgroup).copied().unwrap_or_default()
    }
}
