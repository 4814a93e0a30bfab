//! Visual bug reports: the community-facing record that everything else
//! in the pipeline consumes.
//!
//! A report is only ever constructed through [`validate_report`], so any
//! `Report` value in the system satisfies the field invariants (severity,
//! representativeness and evidence quality in `[0, 1]`, at least one
//! reporter, at least one prompt).
//!
//! Reports persist as line-delimited JSON records. The first line of a file
//! written by this crate is a schema header; readers accept files with or
//! without it.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema tag written as the first line of a report record file.
pub const REPORT_SCHEMA: &str = "recourse/report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Affected group filing the report.
///
/// Declaration order is alphabetical by display label so that ordered maps
/// keyed by subgroup render tables in a stable, readable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subgroup {
    AfricanDiaspora,
    #[serde(rename = "LGBTQ+")]
    Lgbtq,
    NeighborhoodOrgs,
    Newcomers,
    Seniors,
    Women,
}

impl Subgroup {
    pub const ALL: [Subgroup; 6] = [
        Subgroup::AfricanDiaspora,
        Subgroup::Lgbtq,
        Subgroup::NeighborhoodOrgs,
        Subgroup::Newcomers,
        Subgroup::Seniors,
        Subgroup::Women,
    ];

    /// Stable machine name (matches the serialized form).
    pub fn as_str(self) -> &'static str {
        match self {
            Subgroup::AfricanDiaspora => "AfricanDiaspora",
            Subgroup::Lgbtq => "LGBTQ+",
            Subgroup::NeighborhoodOrgs => "NeighborhoodOrgs",
            Subgroup::Newcomers => "Newcomers",
            Subgroup::Seniors => "Seniors",
            Subgroup::Women => "Women",
        }
    }

    /// Human label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Subgroup::AfricanDiaspora => "African diaspora",
            Subgroup::Lgbtq => "LGBTQ+",
            Subgroup::NeighborhoodOrgs => "Neighborhood orgs",
            Subgroup::Newcomers => "Newcomers",
            Subgroup::Seniors => "Seniors",
            Subgroup::Women => "Women",
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subgroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subgroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown subgroup `{s}`"))
    }
}

/// Kind of group-level harm observed in generated imagery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HarmType {
    Stereotyping,
    Omission,
    Erasure,
    ToxicMotif,
    Misrepresentation,
}

impl HarmType {
    pub const ALL: [HarmType; 5] = [
        HarmType::Stereotyping,
        HarmType::Omission,
        HarmType::Erasure,
        HarmType::ToxicMotif,
        HarmType::Misrepresentation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HarmType::Stereotyping => "Stereotyping",
            HarmType::Omission => "Omission",
            HarmType::Erasure => "Erasure",
            HarmType::ToxicMotif => "ToxicMotif",
            HarmType::Misrepresentation => "Misrepresentation",
        }
    }

    /// Absence harms (something missing) are answered with protective
    /// language; presence harms (something unwanted shown) with exclusions.
    pub fn is_absence(self) -> bool {
        matches!(self, HarmType::Omission | HarmType::Erasure)
    }
}

impl fmt::Display for HarmType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HarmType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HarmType::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| format!("unknown harm type `{s}`"))
    }
}

/// The four recourse primitives, ordered from fastest/shallowest to
/// slowest/most structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FixType {
    CounterPrompt,
    NegativePrompt,
    DatasetEdit,
    RewardTweak,
}

impl FixType {
    pub const ALL: [FixType; 4] = [
        FixType::CounterPrompt,
        FixType::NegativePrompt,
        FixType::DatasetEdit,
        FixType::RewardTweak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FixType::CounterPrompt => "CounterPrompt",
            FixType::NegativePrompt => "NegativePrompt",
            FixType::DatasetEdit => "DatasetEdit",
            FixType::RewardTweak => "RewardTweak",
        }
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            FixType::CounterPrompt => "CP",
            FixType::NegativePrompt => "NP",
            FixType::DatasetEdit => "DE",
            FixType::RewardTweak => "RT",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FixType::CounterPrompt => "Counter-prompt",
            FixType::NegativePrompt => "Negative prompt",
            FixType::DatasetEdit => "Dataset edit",
            FixType::RewardTweak => "Reward tweak",
        }
    }

    pub fn is_prompt_level(self) -> bool {
        matches!(self, FixType::CounterPrompt | FixType::NegativePrompt)
    }

    /// Next stronger primitive after a failed verification. Reward tweaks
    /// are the strongest layer and escalate to themselves.
    pub fn escalate(self) -> FixType {
        match self {
            FixType::CounterPrompt => FixType::NegativePrompt,
            FixType::NegativePrompt => FixType::DatasetEdit,
            FixType::DatasetEdit | FixType::RewardTweak => FixType::RewardTweak,
        }
    }
}

impl fmt::Display for FixType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixType::ALL
            .into_iter()
            .find(|x| x.as_str() == s || x.abbrev() == s)
            .ok_or_else(|| format!("unknown fix type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportId(pub String);

impl ReportId {
    pub fn new(id: impl Into<String>) -> Self {
        ReportId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ReportId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Evidence attached to a report. Metadata only; no image payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: ReportId,
    pub subgroup: Subgroup,
    pub context: String,
    pub prompts: Vec<String>,
    pub evidence: Vec<Evidence>,
    pub harm_type: HarmType,
    pub severity: f64,
    pub reporters: u32,
    pub representativeness: f64,
    pub evidence_quality: f64,
}

/// Unvalidated report fields as they arrive from external input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawReport {
    pub id: Option<String>,
    pub subgroup: Option<String>,
    pub context: Option<String>,
    #[serde(default)]
    pub prompts: Vec<String>,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
    pub harm_type: Option<String>,
    pub severity: Option<f64>,
    pub reporters: Option<i64>,
    pub representativeness: Option<f64>,
    pub evidence_quality: Option<f64>,
}

impl From<&Report> for RawReport {
    fn from(r: &Report) -> Self {
        RawReport {
            id: Some(r.id.0.clone()),
            subgroup: Some(r.subgroup.as_str().to_string()),
            context: Some(r.context.clone()),
            prompts: r.prompts.clone(),
            evidence: r.evidence.clone(),
            harm_type: Some(r.harm_type.as_str().to_string()),
            severity: Some(r.severity),
            reporters: Some(i64::from(r.reporters)),
            representativeness: Some(r.representativeness),
            evidence_quality: Some(r.evidence_quality),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("{field} = {value} is outside [0, 1]")]
    Range { field: &'static str, value: f64 },
    #[error("reporters = {value} must be at least 1")]
    Count { value: i64 },
    #[error("{field}: {message}")]
    Enum { field: &'static str, message: String },
    #[error("prompts must be non-empty")]
    EmptyPrompts,
    #[error("missing required field `{0}`")]
    Missing(&'static str),
}

/// Checks every field and either returns a complete `Report` or the full
/// list of field-level problems.
pub fn validate_report(raw: &RawReport) -> Result<Report, Vec<FieldError>> {
    let mut errors = Vec::new();

    let id = match raw.id.as_deref() {
        Some(id) if !id.is_empty() => Some(ReportId::new(id)),
        _ => {
            errors.push(FieldError::Missing("id"));
            None
        }
    };
    let context = match raw.context.as_deref() {
        Some(c) => Some(c.to_string()),
        None => {
            errors.push(FieldError::Missing("context"));
            None
        }
    };
    let subgroup = parse_enum::<Subgroup>(raw.subgroup.as_deref(), "subgroup", &mut errors);
    let harm_type = parse_enum::<HarmType>(raw.harm_type.as_deref(), "harm_type", &mut errors);
    let severity = unit_interval(raw.severity, "severity", &mut errors);
    let representativeness =
        unit_interval(raw.representativeness, "representativeness", &mut errors);
    let evidence_quality = unit_interval(raw.evidence_quality, "evidence_quality", &mut errors);

    let reporters = match raw.reporters {
        None => {
            errors.push(FieldError::Missing("reporters"));
            None
        }
        Some(n) if n < 1 => {
            errors.push(FieldError::Count { value: n });
            None
        }
        Some(n) => match u32::try_from(n) {
            Ok(n) => Some(n),
            Err(_) => {
                errors.push(FieldError::Count { value: n });
                None
            }
        },
    };

    if raw.prompts.is_empty() {
        errors.push(FieldError::EmptyPrompts);
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    // All Options are Some once the error list is empty.
    Ok(Report {
        id: id.unwrap(),
        subgroup: subgroup.unwrap(),
        context: context.unwrap(),
        prompts: raw.prompts.clone(),
        evidence: raw.evidence.clone(),
        harm_type: harm_type.unwrap(),
        severity: severity.unwrap(),
        reporters: reporters.unwrap(),
        representativeness: representativeness.unwrap(),
        evidence_quality: evidence_quality.unwrap(),
    })
}

fn parse_enum<T: FromStr<Err = String>>(
    value: Option<&str>,
    field: &'static str,
    errors: &mut Vec<FieldError>,
) -> Option<T> {
    match value {
        None => {
            errors.push(FieldError::Missing(field));
            None
        }
        Some(v) => match v.parse() {
            Ok(x) => Some(x),
            Err(message) => {
                errors.push(FieldError::Enum { field, message });
                None
            }
        },
    }
}

fn unit_interval(
    value: Option<f64>,
    field: &'static str,
    errors: &mut Vec<FieldError>,
) -> Option<f64> {
    match value {
        None => {
            errors.push(FieldError::Missing(field));
            None
        }
        // NaN fails the range check.
        Some(v) if (0.0..=1.0).contains(&v) => Some(v),
        Some(v) => {
            errors.push(FieldError::Range { field, value: v });
            None
        }
    }
}

/// A problem on one line of a record file. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum RecordFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{} invalid record(s):\n{}", .0.len(), join_lines(.0))]
    Invalid(Vec<LineError>),
}

fn join_lines(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Serialize, Deserialize)]
struct SchemaHeader {
    schema: String,
    version: u32,
}

/// Reads a line-delimited report file. Blank lines and a leading schema
/// header are skipped; every other line must be a valid report.
pub fn read_reports<R: BufRead>(reader: R) -> Result<Vec<Report>, RecordFileError> {
    let mut reports = Vec::new();
    let mut errors = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(header) = serde_json::from_str::<SchemaHeader>(trimmed) {
                if header.schema != REPORT_SCHEMA || header.version != REPORT_SCHEMA_VERSION {
                    errors.push(LineError {
                        line: lineno,
                        message: format!(
                            "unsupported schema {} v{}",
                            header.schema, header.version
                        ),
                    });
                }
                continue;
            }
        }
        let raw: RawReport = match serde_json::from_str(trimmed) {
            Ok(raw) => raw,
            Err(e) => {
                errors.push(LineError {
                    line: lineno,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        match validate_report(&raw) {
            Ok(report) => reports.push(report),
            Err(field_errors) => errors.push(LineError {
                line: lineno,
                message: field_errors
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            }),
        }
    }

    if errors.is_empty() {
        Ok(reports)
    } else {
        Err(RecordFileError::Invalid(errors))
    }
}

pub fn write_reports<W: Write>(mut writer: W, reports: &[Report]) -> std::io::Result<()> {
    let header = SchemaHeader {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_SCHEMA_VERSION,
    };
    writeln!(writer, "{}", serde_json::to_string(&header)?)?;
    for report in reports {
        writeln!(writer, "{}", serde_json::to_string(report)?)?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> RawReport {
        RawReport {
            id: Some("R1".into()),
            subgroup: Some("Seniors".into()),
            context: Some("borough-a".into()),
            prompts: vec!["a sunny main street".into()],
            evidence: vec![Evidence {
                kind: "screenshot".into(),
                detail: "uri://example/1".into(),
            }],
            harm_type: Some("Omission".into()),
            severity: Some(0.5),
            reporters: Some(3),
            representativeness: Some(0.4),
            evidence_quality: Some(0.9),
        }
    }

    #[test]
    fn valid_fields_produce_report() {
        let report = validate_report(&raw()).unwrap();
        assert_eq!(report.subgroup, Subgroup::Seniors);
        assert_eq!(report.harm_type, HarmType::Omission);
        assert_eq!(report.reporters, 3);
        assert_eq!(report.severity, 0.5);
    }

    #[test]
    fn severity_out_of_range() {
        let mut r = raw();
        r.severity = Some(1.2);
        let errs = validate_report(&r).unwrap_err();
        assert_eq!(
            errs,
            vec![FieldError::Range {
                field: "severity",
                value: 1.2
            }]
        );
    }

    #[test]
    fn zero_reporters() {
        let mut r = raw();
        r.reporters = Some(0);
        assert_eq!(
            validate_report(&r).unwrap_err(),
            vec![FieldError::Count { value: 0 }]
        );
    }

    #[test]
    fn collects_every_error() {
        let mut r = raw();
        r.subgroup = Some("Martians".into());
        r.harm_type = Some("Glare".into());
        r.representativeness = Some(f64::NAN);
        r.prompts.clear();
        let errs = validate_report(&r).unwrap_err();
        assert_eq!(errs.len(), 4);
        assert!(errs.contains(&FieldError::EmptyPrompts));
        assert!(matches!(errs[0], FieldError::Enum { field: "subgroup", .. }));
    }

    #[test]
    fn validation_is_idempotent() {
        let report = validate_report(&raw()).unwrap();
        let again = validate_report(&RawReport::from(&report)).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn lgbtq_round_trips_through_serde() {
        let json = serde_json::to_string(&Subgroup::Lgbtq).unwrap();
        assert_eq!(json, "\"LGBTQ+\"");
        assert_eq!("LGBTQ+".parse::<Subgroup>().unwrap(), Subgroup::Lgbtq);
    }

    #[test]
    fn record_file_round_trip_and_line_errors() {
        let report = validate_report(&raw()).unwrap();
        let mut buf = Vec::new();
        write_reports(&mut buf, &[report.clone(), report.clone()]).unwrap();
        let back = read_reports(buf.as_slice()).unwrap();
        assert_eq!(back, vec![report.clone(), report]);

        let bad = "{\"id\":\"x\"\n\n{\"id\":\"y\",\"severity\":2.0}\n";
        match read_reports(bad.as_bytes()) {
            Err(RecordFileError::Invalid(errs)) => {
                assert_eq!(errs.len(), 2);
                assert_eq!(errs[0].line, 1);
                assert_eq!(errs[1].line, 3);
            }
            other => panic!("expected line errors, got {other:?}"),
        }
    }

    #[test]
    fn escalation_ladder_ends_at_reward_tweak() {
        assert_eq!(FixType::CounterPrompt.escalate(), FixType::NegativePrompt);
        assert_eq!(FixType::NegativePrompt.escalate(), FixType::DatasetEdit);
        assert_eq!(FixType::DatasetEdit.escalate(), FixType::RewardTweak);
        assert_eq!(FixType::RewardTweak.escalate(), FixType::RewardTweak);
    }
}
