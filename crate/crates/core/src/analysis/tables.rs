//! Per-fix-type and per-subgroup outcome tables.
//!
//! Both tables cover every report in the program. Fix-type rows group by the
//! fix assigned at triage (the candidate fix), so monitored reports count
//! under the fix they would have received.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::median_iqr;
use crate::analysis::suppress::Stratum;
use crate::report::{FixType, Subgroup};
use crate::sim::OutcomeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub group: String,
    pub n: usize,
    pub median_latency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iqr: Option<f64>,
    /// Percent of cases recurring within the window.
    pub recurrence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_satisfaction: Option<f64>,
    /// Percent of cases with a planning change adopted.
    pub policy_adopted: Option<f64>,
}

impl Stratum for TableRow {
    fn key(&self) -> String {
        self.group.clone()
    }

    fn count(&self) -> usize {
        self.n
    }
}

fn pct(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| 100.0 * hits as f64 / n as f64)
}

fn row(group: &str, members: &[&OutcomeRecord], with_spread: bool) -> TableRow {
    let n = members.len();
    let latencies: Vec<f64> = members.iter().map(|o| o.latency_days).collect();
    let (median, iqr) = match median_iqr(&latencies) {
        Ok((m, i)) => (Some(m), Some(i)),
        Err(_) => (None, None),
    };
    let mean_sat = (n > 0).then(|| members.iter().map(|o| o.satisfaction).sum::<f64>() / n as f64);
    TableRow {
        group: group.to_string(),
        n,
        median_latency: median,
        iqr: if with_spread { iqr } else { None },
        recurrence: pct(members.iter().filter(|o| o.recurred_30d).count(), n),
        mean_satisfaction: if with_spread { mean_sat } else { None },
        policy_adopted: pct(members.iter().filter(|o| o.policy_adopted_6mo).count(), n),
    }
}

/// One row per fix type. Empty input gives an empty table.
pub fn fix_type_table(outcomes: &[OutcomeRecord]) -> Vec<TableRow> {
    if outcomes.is_empty() {
        return Vec::new();
    }
    let mut groups: BTreeMap<FixType, Vec<&OutcomeRecord>> =
        FixType::ALL.into_iter().map(|f| (f, Vec::new())).collect();
    for o in outcomes {
        groups.entry(o.candidate_fix).or_default().push(o);
    }
    groups
        .iter()
        .map(|(fix, members)| row(fix.label(), members, true))
        .collect()
}

/// One row per subgroup (median latency, recurrence, adoption).
pub fn subgroup_table(outcomes: &[OutcomeRecord]) -> Vec<TableRow> {
    if outcomes.is_empty() {
        return Vec::new();
    }
    let mut groups: BTreeMap<Subgroup, Vec<&OutcomeRecord>> =
        Subgroup::ALL.into_iter().map(|g| (g, Vec::new())).collect();
    for o in outcomes {
        groups.entry(o.subgroup).or_default().push(o);
    }
    groups
        .iter()
        .map(|(g, members)| row(g.label(), members, false))
        .collect()
}
