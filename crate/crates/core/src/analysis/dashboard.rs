//! Public dashboard snapshot: one JSON document with case histories,
//! thresholds, decisions, service levels and suppressed stratifications.
//!
//! Field order follows struct declaration order and every map is a
//! `BTreeMap`, so two exports of the same program are byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::render::{sweep_text, table_text, TableKind};
use crate::analysis::suppress::{suppress_small_cells, Cell, CountCell};
use crate::analysis::tables::{fix_type_table, subgroup_table, TableRow};
use crate::analysis::{median_iqr, program_id, SweepResult};
use crate::case::{CaseEvent, CaseState};
use crate::report::{FixType, HarmType, Subgroup};
use crate::sim::ProgramResult;

pub const DASHBOARD_SCHEMA: &str = "recourse/dashboard";
pub const DASHBOARD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub schema: String,
    pub version: u32,
    pub run: RunInfo,
    pub thresholds: Thresholds,
    pub service_levels: Vec<ServiceLevel>,
    pub decisions: BTreeMap<String, usize>,
    /// Fix-type rows are not subgroup-keyed and are published as is.
    pub fix_type_table: Vec<TableRow>,
    pub subgroup_table: Vec<Cell<TableRow>>,
    pub stratifications: Stratifications,
    pub sweep: SweepResult,
    pub cases: Vec<CaseEntry>,
    pub rendered: Rendered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub program_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub reports: usize,
    pub mandated: usize,
    pub closed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_n: f64,
    pub default_tau_m: f64,
    pub tau_m: BTreeMap<HarmType, f64>,
    pub k_min: usize,
}

/// Service level for one severity band, over mandated cases with a
/// verified fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceLevel {
    pub band: String,
    pub severity_from: f64,
    pub severity_to: f64,
    pub target_days: f64,
    pub verified_cases: usize,
    pub median_days: Option<f64>,
    pub within_target_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratifications {
    pub subgroup_by_fix: Vec<Cell<CountCell>>,
    pub subgroup_by_harm: Vec<Cell<CountCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub state: String,
    pub mandate_score: Option<f64>,
    pub fix: Option<FixType>,
    pub events: Vec<CaseEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendered {
    pub fix_type_table: String,
    pub subgroup_table: String,
    pub sweep: String,
}

fn service_levels(program: &ProgramResult) -> Vec<ServiceLevel> {
    let sla = program.config.analysis.sla;
    let high_from = program.config.triage.severity_band_high;
    let bands = [
        ("low", 0.0, sla.medium_from, sla.low_days),
        ("medium", sla.medium_from, high_from, sla.medium_days),
        ("high", high_from, 1.0, sla.high_days),
    ];
    bands
        .iter()
        .map(|&(band, lo, hi, target)| {
            let in_band = |s: f64| s >= lo && (s < hi || (band == "high" && s <= hi));
            let days: Vec<f64> = program
                .cases
                .iter()
                .zip(&program.outcomes)
                .filter(|(case, o)| {
                    o.mandated
                        && in_band(case.report.severity)
                        && case
                            .events
                            .iter()
                            .any(|e| e.kind == crate::case::EventKind::Transition(CaseState::Verified { pass: true }))
                })
                .map(|(_, o)| o.latency_days)
                .collect();
            let n = days.len();
            ServiceLevel {
                band: band.to_string(),
                severity_from: lo,
                severity_to: hi,
                target_days: target,
                verified_cases: n,
                median_days: median_iqr(&days).ok().map(|(m, _)| m),
                within_target_pct: (n > 0)
                    .then(|| 100.0 * days.iter().filter(|&&d| d <= target).count() as f64 / n as f64),
            }
        })
        .collect()
}

fn decisions(program: &ProgramResult) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for o in &program.outcomes {
        *out.entry(format!("triage:{}", o.fix)).or_insert(0) += 1;
    }
    for c in &program.cases {
        let key = match c.state {
            CaseState::FixSelected(_) => "final:FixSelected".to_string(),
            CaseState::Verified { pass } => format!("final:Verified({})", if pass { "pass" } else { "fail" }),
            s => format!("final:{s}"),
        };
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

fn cross_tab<K: Ord + Copy>(
    program: &ProgramResult,
    all: &[K],
    key: impl Fn(usize) -> K,
    label: impl Fn(K) -> String,
) -> Vec<CountCell> {
    let mut counts: BTreeMap<(Subgroup, K), usize> = BTreeMap::new();
    for g in Subgroup::ALL {
        for &k in all {
            counts.insert((g, k), 0);
        }
    }
    for (i, o) in program.outcomes.iter().enumerate() {
        *counts.entry((o.subgroup, key(i))).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|((g, k), count)| CountCell {
            keys: vec![g.label().to_string(), label(k)],
            count,
        })
        .collect()
}

/// Builds the snapshot. Subgroup-keyed tables and stratifications are
/// suppressed below `k_min`.
pub fn export_dashboard(program: &ProgramResult, sweep: &SweepResult, k_min: usize) -> Dashboard {
    let fix_rows = fix_type_table(&program.outcomes);
    let subgroup_rows = suppress_small_cells(&subgroup_table(&program.outcomes), k_min);

    let by_fix = cross_tab(
        program,
        &FixType::ALL,
        |i| program.outcomes[i].candidate_fix,
        |f| f.label().to_string(),
    );
    let by_harm = cross_tab(
        program,
        &HarmType::ALL,
        |i| program.outcomes[i].harm_type,
        |h| h.to_string(),
    );

    let cases = program
        .cases
        .iter()
        .map(|c| CaseEntry {
            id: c.id().to_string(),
            state: c.state.to_string(),
            mandate_score: c.mandate_score,
            fix: c.fix,
            events: c.events.clone(),
        })
        .collect();

    let fix_cells: Vec<Cell<TableRow>> = fix_rows.iter().cloned().map(Cell::Retained).collect();
    Dashboard {
        schema: DASHBOARD_SCHEMA.to_string(),
        version: DASHBOARD_VERSION,
        run: RunInfo {
            program_id: program_id(program),
            seed: program.seed,
            config_hash: program.config.hash(),
            reports: program.reports.len(),
            mandated: program.mandated_count(),
            closed: program.cases.iter().filter(|c| c.state == CaseState::Closed).count(),
        },
        thresholds: Thresholds {
            tau_n: program.config.mandate.tau_n,
            default_tau_m: program.config.mandate.default_tau_m,
            tau_m: program.config.mandate.tau_m.clone(),
            k_min,
        },
        service_levels: service_levels(program),
        decisions: decisions(program),
        rendered: Rendered {
            fix_type_table: table_text(TableKind::FixTypes, &fix_cells),
            subgroup_table: table_text(TableKind::Subgroups, &subgroup_rows),
            sweep: sweep_text(sweep),
        },
        fix_type_table: fix_rows,
        subgroup_table: subgroup_rows,
        stratifications: Stratifications {
            subgroup_by_fix: suppress_small_cells(&by_fix, k_min),
            subgroup_by_harm: suppress_small_cells(&by_harm, k_min),
        },
        sweep: sweep.clone(),
        cases,
    }
}

impl Dashboard {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dashboard serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::threshold_sweep;
    use crate::config::EngineConfig;
    use crate::sim::run_program;

    #[test]
    fn snapshot_shape_and_determinism() {
        let config = EngineConfig::default();
        let program = run_program(&config).unwrap();
        let sweep = threshold_sweep(&program, &config.analysis.thresholds);
        let a = export_dashboard(&program, &sweep, 5);
        let b = export_dashboard(&program, &sweep, 5);
        assert_eq!(a.cases.len(), 240);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.service_levels.len(), 3);
        assert_eq!(a.stratifications.subgroup_by_fix.len(), 24);
        assert_eq!(a.stratifications.subgroup_by_harm.len(), 30);
        for cell in a.stratifications.subgroup_by_harm.iter().chain(&a.stratifications.subgroup_by_fix) {
            if let Cell::Retained(c) = cell {
                assert!(c.count >= 5);
            }
        }
    }

    #[test]
    fn large_k_min_suppresses_every_subgroup() {
        let config = EngineConfig::default();
        let program = run_program(&config).unwrap();
        let sweep = threshold_sweep(&program, &[0.12]);
        let d = export_dashboard(&program, &sweep, 50);
        assert_eq!(d.subgroup_table.len(), 6);
        assert!(d.subgroup_table.iter().all(Cell::is_suppressed));
        assert_eq!(d.fix_type_table.len(), 4);
    }
}
