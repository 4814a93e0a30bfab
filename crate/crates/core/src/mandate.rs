//! Mandate score and the mandate decision.
//!
//! `M = s * (1 - exp(-n / tau_n)) * r * q`, and a mitigation is mandated when
//! `M >= tau_M(h)` for the report's harm type.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{HarmType, Report};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MandateError {
    #[error("tau_n must be positive and finite, got {0}")]
    Domain(f64),
    #[error("mandate threshold for {harm} = {value} is outside [0, 1]")]
    Threshold { harm: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MandatePolicy {
    /// Volume-saturation constant.
    pub tau_n: f64,
    /// Threshold used for harm types without an entry in `tau_m`.
    pub default_tau_m: f64,
    /// Per-harm-type overrides.
    #[serde(default)]
    pub tau_m: BTreeMap<HarmType, f64>,
}

impl Default for MandatePolicy {
    fn default() -> Self {
        MandatePolicy {
            tau_n: 8.0,
            default_tau_m: 0.12,
            tau_m: BTreeMap::new(),
        }
    }
}

impl MandatePolicy {
    pub fn global(tau_n: f64, tau_m: f64) -> Self {
        MandatePolicy {
            tau_n,
            default_tau_m: tau_m,
            tau_m: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), MandateError> {
        if !(self.tau_n > 0.0 && self.tau_n.is_finite()) {
            return Err(MandateError::Domain(self.tau_n));
        }
        let thresholds = std::iter::once(("default".to_string(), self.default_tau_m)).chain(
            self.tau_m
                .iter()
                .map(|(h, v)| (h.as_str().to_string(), *v)),
        );
        for (harm, value) in thresholds {
            if !(0.0..=1.0).contains(&value) {
                return Err(MandateError::Threshold { harm, value });
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, harm: HarmType) -> f64 {
        self.tau_m.get(&harm).copied().unwrap_or(self.default_tau_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MandateVerdict {
    pub score: f64,
    pub mandated: bool,
    pub threshold_used: f64,
}

impl MandateVerdict {
    pub fn new(score: f64, threshold: f64) -> Self {
        MandateVerdict {
            score,
            mandated: score >= threshold,
            threshold_used: threshold,
        }
    }
}

/// `1 - exp(-n / tau_n)`, computed through `exp_m1` so small ratios keep
/// their precision.
pub fn volume_saturation(reporters: u64, tau_n: f64) -> Result<f64, MandateError> {
    if !(tau_n > 0.0 && tau_n.is_finite()) {
        return Err(MandateError::Domain(tau_n));
    }
    Ok(-(-(reporters as f64) / tau_n).exp_m1())
}

pub fn mandate_score(report: &Report, policy: &MandatePolicy) -> Result<f64, MandateError> {
    let volume = volume_saturation(u64::from(report.reporters), policy.tau_n)?;
    let score =
        report.severity * volume * report.representativeness * report.evidence_quality;
    Ok(score.clamp(0.0, 1.0))
}

/// Mandate decision with an inclusive boundary.
pub fn is_mandated(report: &Report, policy: &MandatePolicy) -> Result<MandateVerdict, MandateError> {
    let score = mandate_score(report, policy)?;
    Ok(MandateVerdict::new(score, policy.threshold_for(report.harm_type)))
}
