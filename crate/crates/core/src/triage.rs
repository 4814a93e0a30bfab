//! Triage: mandate gate, cross-report clustering, SVES probes and fix
//! routing.
//!
//! Routing table for a mandated report:
//!
//! | condition                                   | fix             |
//! |---------------------------------------------|-----------------|
//! | steerable, absence harm                     | counter-prompt  |
//! | steerable, presence harm                    | negative prompt |
//! | not steerable (or forced structural), gap   | dataset edit    |
//! | otherwise                                   | reward tweak    |
//!
//! A report is forced structural when its severity is in the high band and
//! its cluster has recurred at least `structural_recurrence_min` times.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mandate::MandateVerdict;
use crate::report::{FixType, HarmType, Report, ReportId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterKey {
    pub context: String,
    pub harm_type: HarmType,
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.context, self.harm_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub key: ClusterKey,
    pub members: Vec<ReportId>,
    pub recurrence_count: usize,
}

/// Exact-key grouping on `(context, harm_type)`, sorted by key. Members keep
/// input order.
pub fn cluster_reports(reports: &[Report]) -> Vec<Cluster> {
    let mut groups: BTreeMap<ClusterKey, Vec<ReportId>> = BTreeMap::new();
    for report in reports {
        groups
            .entry(ClusterKey {
                context: report.context.clone(),
                harm_type: report.harm_type,
            })
            .or_default()
            .push(report.id.clone());
    }
    groups
        .into_iter()
        .map(|(key, members)| Cluster {
            recurrence_count: members.len(),
            key,
            members,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub steerable: bool,
    pub steerability_score: f64,
    pub coverage_gap: bool,
}

/// Measures how far targeted prompts reduce the harm on the SVES; returns
/// a score in `[0, 1]`.
pub trait SteerabilityProbe {
    fn steerability(&mut self, cluster: &Cluster) -> f64;
}

/// Reports whether the harm traces to a data coverage gap.
pub trait CoverageProbe {
    fn coverage_gap(&mut self, cluster: &Cluster) -> bool;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriageError {
    #[error("{0} probe is not configured")]
    ProbeUnavailable(&'static str),
}

/// Runs both probes on a cluster.
pub fn probe_cluster(
    cluster: &Cluster,
    steerability: Option<&mut dyn SteerabilityProbe>,
    coverage: Option<&mut dyn CoverageProbe>,
    probe_threshold: f64,
) -> Result<ProbeResult, TriageError> {
    let steerability = steerability.ok_or(TriageError::ProbeUnavailable("steerability"))?;
    let coverage = coverage.ok_or(TriageError::ProbeUnavailable("coverage"))?;
    let score = steerability.steerability(cluster).clamp(0.0, 1.0);
    Ok(ProbeResult {
        steerable: score >= probe_threshold,
        steerability_score: score,
        coverage_gap: coverage.coverage_gap(cluster),
    })
}

/// Steerability probe that always returns the same score.
#[derive(Debug, Clone, Copy)]
pub struct FixedSteerability(pub f64);

impl SteerabilityProbe for FixedSteerability {
    fn steerability(&mut self, _cluster: &Cluster) -> f64 {
        self.0
    }
}

/// Coverage probe that flags a fixed set of contexts.
#[derive(Debug, Clone, Default)]
pub struct FlaggedContexts(pub BTreeSet<String>);

impl CoverageProbe for FlaggedContexts {
    fn coverage_gap(&mut self, cluster: &Cluster) -> bool {
        self.0.contains(&cluster.key.context)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageParams {
    pub severity_band_high: f64,
    pub structural_recurrence_min: usize,
    pub probe_threshold: f64,
}

impl Default for TriageParams {
    fn default() -> Self {
        TriageParams {
            severity_band_high: 0.8,
            structural_recurrence_min: 3,
            probe_threshold: 0.5,
        }
    }
}

/// Outcome of fix selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TriageDecision {
    Monitor,
    Fix(FixType),
}

impl TriageDecision {
    pub fn fix(self) -> Option<FixType> {
        match self {
            TriageDecision::Monitor => None,
            TriageDecision::Fix(f) => Some(f),
        }
    }
}

impl fmt::Display for TriageDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriageDecision::Monitor => f.write_str("Monitor"),
            TriageDecision::Fix(fix) => f.write_str(fix.as_str()),
        }
    }
}

impl FromStr for TriageDecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Monitor" {
            Ok(TriageDecision::Monitor)
        } else {
            s.parse().map(TriageDecision::Fix)
        }
    }
}

impl From<TriageDecision> for String {
    fn from(d: TriageDecision) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for TriageDecision {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Routing ignoring the mandate gate: the fix a report would receive if it
/// were mandated.
pub fn candidate_fix(
    probe: &ProbeResult,
    harm_type: HarmType,
    severity: f64,
    recurrence_count: usize,
    params: &TriageParams,
) -> FixType {
    let forced_structural = severity >= params.severity_band_high
        && recurrence_count >= params.structural_recurrence_min;
    if probe.steerable && !forced_structural {
        if harm_type.is_absence() {
            FixType::CounterPrompt
        } else {
            FixType::NegativePrompt
        }
    } else if probe.coverage_gap {
        FixType::DatasetEdit
    } else {
        FixType::RewardTweak
    }
}

pub fn select_fix(
    verdict: &MandateVerdict,
    probe: &ProbeResult,
    harm_type: HarmType,
    severity: f64,
    recurrence_count: usize,
    params: &TriageParams,
) -> TriageDecision {
    if !verdict.mandated {
        return TriageDecision::Monitor;
    }
    TriageDecision::Fix(candidate_fix(
        probe,
        harm_type,
        severity,
        recurrence_count,
        params,
    ))
}
