//! Threshold sweeps, outcome tables, small-cell suppression and the
//! dashboard snapshot.

pub mod dashboard;
pub mod render;
pub mod suppress;
pub mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ProgramResult, SimError};

pub use dashboard::{export_dashboard, Dashboard};
pub use suppress::{suppress_small_cells, Cell, Stratum};
pub use tables::{fix_type_table, subgroup_table, TableRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("flags has {flags} entries but truth has {truth}")]
    LengthMismatch { flags: usize, truth: usize },
    #[error("no positive labels; recall is undefined")]
    NoPositives,
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Mandate thresholds for the sensitivity sweep.
    pub thresholds: Vec<f64>,
    /// Minimum stratum size published on the dashboard.
    pub k_min: usize,
    pub sla: SlaTargets,
}

/// Published service-level targets (days to verified fix) by severity band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaTargets {
    /// Lower severity bound of the medium band; the high band starts at the
    /// triage `severity_band_high`.
    pub medium_from: f64,
    pub low_days: f64,
    pub medium_days: f64,
    pub high_days: f64,
}

impl AnalysisSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err("analysis.thresholds must lie in [0, 1]".into());
        }
        if self.k_min == 0 {
            return Err("analysis.k_min must be at least 1".into());
        }
        Ok(())
    }
}

/// 2x2 confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_flags(flags: &[bool], truth: &[bool]) -> Result<Self, AnalysisError> {
        if flags.len() != truth.len() {
            return Err(AnalysisError::LengthMismatch {
                flags: flags.len(),
                truth: truth.len(),
            });
        }
        let mut c = Confusion::default();
        for (&f, &t) in flags.iter().zip(truth) {
            match (f, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn flagged(&self) -> usize {
        self.tp + self.fp
    }

    /// `None` when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        (self.flagged() > 0).then(|| self.tp as f64 / self.flagged() as f64)
    }

    /// `None` when there are no positives.
    pub fn recall(&self) -> Option<f64> {
        let positives = self.tp + self.fn_;
        (positives > 0).then(|| self.tp as f64 / positives as f64)
    }

    pub fn flagged_share(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.flagged() as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub confusion: Confusion,
    /// `None` is the explicit "no flags" marker.
    pub precision: Option<f64>,
    pub recall: f64,
    pub flagged_share: f64,
}

pub fn precision_recall(flags: &[bool], truth: &[bool]) -> Result<PrecisionRecall, AnalysisError> {
    let confusion = Confusion::from_flags(flags, truth)?;
    let recall = confusion.recall().ok_or(AnalysisError::NoPositives)?;
    Ok(PrecisionRecall {
        confusion,
        precision: confusion.precision(),
        recall,
        flagged_share: confusion.flagged_share(),
    })
}

/// Median (midpoint rule) and Tukey-hinge IQR. For odd lengths the median
/// belongs to both halves.
pub fn median_iqr(values: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let med = median_sorted(&sorted);
    let half = n.div_ceil(2);
    let lower = median_sorted(&sorted[..half]);
    let upper = median_sorted(&sorted[n - half..]);
    Ok((med, upper - lower))
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Intervention {
    Baseline,
    JuryDeltaR(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub flagged: usize,
    pub total: usize,
    pub flagged_share: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub program_id: String,
    pub intervention: Intervention,
    pub rows: Vec<SweepRow>,
}

/// Flags every score `>= threshold` and tabulates precision/recall, one row
/// per threshold in ascending order.
pub fn sweep_scores(scores: &[f64], truth: &[bool], thresholds: &[f64]) -> Result<Vec<SweepRow>, AnalysisError> {
    if scores.len() != truth.len() {
        return Err(AnalysisError::LengthMismatch {
            flags: scores.len(),
            truth: truth.len(),
        });
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|threshold| {
            let flags: Vec<bool> = scores.iter().map(|&m| m >= threshold).collect();
            let c = Confusion::from_flags(&flags, truth)?;
            Ok(SweepRow {
                threshold,
                flagged: c.flagged(),
                total: c.total(),
                flagged_share: c.flagged_share(),
                precision: c.precision(),
                recall: c.recall(),
            })
        })
        .collect()
}

pub fn program_id(program: &ProgramResult) -> String {
    format!("seed-{}-{}", program.seed, &program.config.hash()[..12])
}

pub fn threshold_sweep(program: &ProgramResult, thresholds: &[f64]) -> SweepResult {
    let (scores, truth) = program.scored_labels();
    SweepResult {
        program_id: program_id(program),
        intervention: Intervention::Baseline,
        rows: sweep_scores(&scores, &truth, thresholds).expect("scores and labels align"),
    }
}

/// Sweep after raising every report's representativeness by `delta_r`.
pub fn jury_sweep(program: &ProgramResult, thresholds: &[f64], delta_r: f64) -> Result<SweepResult, SimError> {
    let (scores, truth) = program.scored_labels_with_jury(delta_r)?;
    Ok(SweepResult {
        program_id: program_id(program),
        intervention: Intervention::JuryDeltaR(delta_r),
        rows: sweep_scores(&scores, &truth, thresholds).expect("scores and labels align"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_flags() {
        let v = [true, true, false];
        let pr = precision_recall(&v, &v).unwrap();
        assert_eq!(pr.precision, Some(1.0));
        assert_eq!(pr.recall, 1.0);
        assert!((pr.flagged_share - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_right() {
        let truth = [true, true, false, false];
        let flags = [true, false, true, false];
        let pr = precision_recall(&flags, &truth).unwrap();
        assert_eq!(pr.precision, Some(0.5));
        assert_eq!(pr.recall, 0.5);
        assert_eq!(pr.flagged_share, 0.5);
    }

    #[test]
    fn no_flags_marker() {
        let pr = precision_recall(&[false, false], &[true, false]).unwrap();
        assert_eq!(pr.precision, None);
        assert_eq!(pr.recall, 0.0);
        assert_eq!(pr.flagged_share, 0.0);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            precision_recall(&[true], &[true, false]),
            Err(AnalysisError::LengthMismatch { flags: 1, truth: 2 })
        );
        assert_eq!(
            precision_recall(&[true, false], &[false, false]),
            Err(AnalysisError::NoPositives)
        );
    }

    #[test]
    fn median_iqr_examples() {
        assert_eq!(median_iqr(&[5.0]).unwrap(), (5.0, 0.0));
        assert_eq!(median_iqr(&[4.0, 1.0, 3.0, 2.0]).unwrap(), (2.5, 2.0));
        assert_eq!(median_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), (3.0, 2.0));
        assert_eq!(median_iqr(&[]), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn zero_threshold_flags_everything() {
        let rows = sweep_scores(&[0.0, 0.1, 0.3], &[true, false, true], &[0.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].flagged_share, 1.0);
        assert_eq!(rows[0].recall, Some(1.0));
    }

    proptest! {
        #[test]
        fn sweep_is_monotone(
            pairs in prop::collection::vec((0.0..0.4f64, any::<bool>()), 1..300),
            thresholds in prop::collection::vec(0.0..0.4f64, 1..12),
        ) {
            let (scores, truth): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            let rows = sweep_scores(&scores, &truth, &thresholds).unwrap();
            for w in rows.windows(2) {
                prop_assert!(w[0].threshold <= w[1].threshold);
                prop_assert!(w[1].flagged_share <= w[0].flagged_share);
                if let (Some(a), Some(b)) = (w[0].recall, w[1].recall) {
                    prop_assert!(b <= a);
                }
            }
        }
    }
}
