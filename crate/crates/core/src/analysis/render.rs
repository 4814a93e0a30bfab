//! CSV and aligned-text rendering for tables and sweeps.
//!
//! Every CSV starts with a `# schema: <name> v<version>` line. Percentages
//! and latencies are rendered to one decimal, satisfaction to two. Suppressed
//! cells print `suppressed` in every value column; an empty precision prints
//! `no-flags`.

use crate::analysis::suppress::Cell;
use crate::analysis::tables::TableRow;
use crate::analysis::{Intervention, SweepResult};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    FixTypes,
    Subgroups,
}

impl TableKind {
    fn schema(self) -> &'static str {
        match self {
            TableKind::FixTypes => "recourse/table-fix-types",
            TableKind::Subgroups => "recourse/table-subgroups",
        }
    }

    fn headers(self) -> &'static [&'static str] {
        match self {
            TableKind::FixTypes => &[
                "fix_type",
                "n",
                "median_latency_days",
                "iqr_days",
                "recurrence_pct",
                "mean_satisfaction",
                "policy_adopted_pct",
            ],
            TableKind::Subgroups => &[
                "subgroup",
                "n",
                "median_latency_days",
                "recurrence_pct",
                "policy_adopted_pct",
            ],
        }
    }
}

fn opt(value: Option<f64>, decimals: usize) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.decimals$}"))
}

fn cells(kind: TableKind, cell: &Cell<TableRow>) -> Vec<String> {
    let width = kind.headers().len();
    match cell {
        Cell::Suppressed { key } => {
            let mut v = vec![key.clone()];
            v.extend(std::iter::repeat_n("suppressed".to_string(), width - 1));
            v
        }
        Cell::Retained(r) => match kind {
            TableKind::FixTypes => vec![
                r.group.clone(),
                r.n.to_string(),
                opt(r.median_latency, 1),
                opt(r.iqr, 1),
                opt(r.recurrence, 1),
                opt(r.mean_satisfaction, 2),
                opt(r.policy_adopted, 1),
            ],
            TableKind::Subgroups => vec![
                r.group.clone(),
                r.n.to_string(),
                opt(r.median_latency, 1),
                opt(r.recurrence, 1),
                opt(r.policy_adopted, 1),
            ],
        },
    }
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).expect("in-memory csv write");
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

pub fn table_csv(kind: TableKind, rows: &[Cell<TableRow>]) -> String {
    let mut out = format!("# schema: {} v{}\n", kind.schema(), TABLE_SCHEMA_VERSION);
    let headers: Vec<String> = kind.headers().iter().map(|s| s.to_string()).collect();
    out.push_str(&csv_line(&headers));
    for row in rows {
        out.push_str(&csv_line(&cells(kind, row)));
    }
    out
}

fn aligned(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |r: &[String]| {
        r.iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = fmt_row(headers);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r));
        out.push('\n');
    }
    out
}

pub fn table_text(kind: TableKind, rows: &[Cell<TableRow>]) -> String {
    let headers: Vec<String> = kind.headers().iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows.iter().map(|r| cells(kind, r)).collect();
    aligned(&headers, &body)
}

const SWEEP_HEADERS: [&str; 5] = ["threshold", "flagged", "flagged_share_pct", "precision_pct", "recall_pct"];

fn sweep_cells(result: &SweepResult) -> Vec<Vec<String>> {
    result
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{:.2}", r.threshold),
                r.flagged.to_string(),
                format!("{:.1}", 100.0 * r.flagged_share),
                r.precision.map_or("no-flags".into(), |p| format!("{:.1}", 100.0 * p)),
                r.recall.map_or("undefined".into(), |p| format!("{:.1}", 100.0 * p)),
            ]
        })
        .collect()
}

fn intervention_label(i: Intervention) -> String {
    match i {
        Intervention::Baseline => "baseline".into(),
        Intervention::JuryDeltaR(d) => format!("jury delta_r={d}"),
    }
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = format!(
        "# schema: recourse/sweep v{TABLE_SCHEMA_VERSION}; program: {}; intervention: {}\n",
        result.program_id,
        intervention_label(result.intervention)
    );
    let headers: Vec<String> = SWEEP_HEADERS.iter().map(|s| s.to_string()).collect();
    out.push_str(&csv_line(&headers));
    for row in sweep_cells(result) {
        out.push_str(&csv_line(&row));
    }
    out
}

pub fn sweep_text(result: &SweepResult) -> String {
    let headers: Vec<String> = SWEEP_HEADERS.iter().map(|s| s.to_string()).collect();
    format!(
        "Mandate threshold sensitivity ({})\n{}",
        intervention_label(result.intervention),
        aligned(&headers, &sweep_cells(result))
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::SweepRow;

    fn row() -> TableRow {
        TableRow {
            group: "Seniors".into(),
            n: 36,
            median_latency: Some(4.04),
            iqr: None,
            recurrence: Some(13.888),
            mean_satisfaction: None,
            policy_adopted: Some(22.22),
        }
    }

    #[test]
    fn subgroup_csv_golden() {
        let rows = vec![
            Cell::Retained(row()),
            Cell::Suppressed {
                key: "Women".into(),
            },
        ];
        assert_eq!(
            table_csv(TableKind::Subgroups, &rows),
            "# schema: recourse/table-subgroups v1\n\
             subgroup,n,median_latency_days,recurrence_pct,policy_adopted_pct\n\
             Seniors,36,4.0,13.9,22.2\n\
             Women,suppressed,suppressed,suppressed,suppressed\n"
        );
    }

    #[test]
    fn text_is_aligned() {
        let text = table_text(TableKind::Subgroups, &[Cell::Retained(row())]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("--------"));
        assert!(lines[2].starts_with("Seniors"));
    }

    #[test]
    fn sweep_markers() {
        let result = SweepResult {
            program_id: "p".into(),
            intervention: Intervention::Baseline,
            rows: vec![SweepRow {
                threshold: 0.3,
                flagged: 0,
                total: 3,
                flagged_share: 0.0,
                precision: None,
                recall: Some(0.0),
            }],
        };
        let csv = sweep_csv(&result);
        assert!(csv.ends_with("0.30,0,0.0,no-flags,0.0\n"), "{csv}");
    }
}
