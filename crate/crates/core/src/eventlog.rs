//! Append-only JSON-lines event log and replay.
//!
//! The first line is a schema header, then one [`CaseEvent`] per line. Each
//! append writes a whole line and flushes it; with [`FsyncPolicy::EveryEvent`]
//! the file is also synced before `append` returns. A reader ignores a final
//! line that does not parse (a torn write) and reports it as a warning;
//! anything unparsable before the last line is corruption.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseEvent, PipelineCase, TransitionError};
use crate::report::{Report, ReportId};

pub const EVENT_LOG_SCHEMA: &str = "recourse/event-log";
pub const EVENT_LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

fn header_line() -> String {
    serde_json::to_string(&Header {
        schema: EVENT_LOG_SCHEMA.into(),
        version: EVENT_LOG_VERSION,
    })
    .expect("header serializes")
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("event log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt event log at byte {offset} (line {line}): {reason}")]
    CorruptLog {
        offset: u64,
        line: usize,
        reason: String,
    },
    #[error("unsupported event log header: {0}")]
    Header(String),
    #[error("no report for case {0}")]
    UnknownCase(ReportId),
    #[error("replay of case {case} failed: {source}")]
    Replay {
        case: ReportId,
        source: TransitionError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FsyncPolicy {
    /// Flush to the OS after every event; sync only on `finish`.
    #[default]
    OnFinish,
    EveryEvent,
}

pub struct EventLogWriter {
    out: BufWriter<File>,
    fsync: FsyncPolicy,
}

impl EventLogWriter {
    /// Creates (or truncates) `path` and writes the header.
    pub fn create(path: &Path, fsync: FsyncPolicy) -> Result<Self, EventLogError> {
        let file = File::create(path)?;
        let mut w = EventLogWriter {
            out: BufWriter::new(file),
            fsync,
        };
        w.write_line(&header_line())?;
        Ok(w)
    }

    /// Opens an existing log for appending. A missing or empty file gets a
    /// header first.
    pub fn open_append(path: &Path, fsync: FsyncPolicy) -> Result<Self, EventLogError> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = EventLogWriter {
            out: BufWriter::new(file),
            fsync,
        };
        if fresh {
            w.write_line(&header_line())?;
        }
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<(), EventLogError> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.out.write_all(buf.as_bytes())?;
        self.out.flush()?;
        if self.fsync == FsyncPolicy::EveryEvent {
            self.out.get_ref().sync_data()?;
        }
        Ok(())
    }

    pub fn append(&mut self, event: &CaseEvent) -> Result<(), EventLogError> {
        let line = serde_json::to_string(event).expect("event serializes");
        self.write_line(&line)
    }

    pub fn finish(mut self) -> Result<(), EventLogError> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(())
    }
}

/// Writes a complete log in one go.
pub fn write_event_log(path: &Path, events: &[CaseEvent]) -> Result<(), EventLogError> {
    let mut w = EventLogWriter::create(path, FsyncPolicy::OnFinish)?;
    for e in events {
        w.append(e)?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadLog {
    pub events: Vec<CaseEvent>,
    pub warnings: Vec<String>,
}

pub fn parse_event_log(text: &[u8]) -> Result<ReadLog, EventLogError> {
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    let mut offset = 0usize;
    let mut saw_header = false;
    let lines: Vec<&[u8]> = text.split_inclusive(|&b| b == b'\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let start = offset;
        offset += raw.len();
        let is_last = i + 1 == lines.len();
        let body = raw.strip_suffix(b"\n").unwrap_or(raw);
        if body.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let torn = is_last && !raw.ends_with(b"\n");
        if !saw_header {
            saw_header = true;
            match serde_json::from_slice::<Header>(body) {
                Ok(h) if h.schema == EVENT_LOG_SCHEMA && h.version == EVENT_LOG_VERSION => continue,
                Ok(h) => return Err(EventLogError::Header(format!("{} v{}", h.schema, h.version))),
                Err(_) => {} // headerless log: treat this line as an event
            }
        }
        match serde_json::from_slice::<CaseEvent>(body) {
            Ok(e) => events.push(e),
            Err(err) if is_last => {
                warnings.push(format!(
                    "ignored unparsable final line {line_no} at byte {start}{}: {err}",
                    if torn { " (no trailing newline)" } else { "" }
                ));
            }
            Err(err) => {
                return Err(EventLogError::CorruptLog {
                    offset: start as u64,
                    line: line_no,
                    reason: err.to_string(),
                })
            }
        }
    }
    Ok(ReadLog { events, warnings })
}

pub fn read_event_log(path: &Path) -> Result<ReadLog, EventLogError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_event_log(&bytes)
}

/// Rebuilds every case from a merged log. Cases come back in the order of
/// `reports`; reports without events are skipped.
pub fn replay_cases(events: &[CaseEvent], reports: &[Report]) -> Result<Vec<PipelineCase>, EventLogError> {
    let mut by_case: BTreeMap<&ReportId, Vec<CaseEvent>> = BTreeMap::new();
    for e in events {
        by_case.entry(&e.case_id).or_default().push(e.clone());
    }
    let known: BTreeMap<&ReportId, &Report> = reports.iter().map(|r| (&r.id, r)).collect();
    if let Some(id) = by_case.keys().find(|id| !known.contains_key(*id)) {
        return Err(EventLogError::UnknownCase((*id).clone()));
    }
    reports
        .iter()
        .filter_map(|r| by_case.get(&r.id).map(|evs| (r, evs)))
        .map(|(r, evs)| {
            PipelineCase::replay(r.clone(), evs).map_err(|source| EventLogError::Replay {
                case: r.id.clone(),
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Actor, CaseState};

    fn events(n: usize) -> Vec<CaseEvent> {
        (0..n)
            .map(|i| {
                CaseEvent::transition(ReportId::new(format!("R{i:04}")), i as f64, Actor::Reporter, CaseState::Submitted)
            })
            .collect()
    }

    #[test]
    fn write_then_read_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let evs = events(10);
        write_event_log(&path, &evs).unwrap();
        let log = read_event_log(&path).unwrap();
        assert_eq!(log.events, evs);
        assert!(log.warnings.is_empty());
    }

    #[test]
    fn append_extends_existing_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let evs = events(4);
        {
            let mut w = EventLogWriter::open_append(&path, FsyncPolicy::EveryEvent).unwrap();
            w.append(&evs[0]).unwrap();
            w.append(&evs[1]).unwrap();
        }
        let mut w = EventLogWriter::open_append(&path, FsyncPolicy::OnFinish).unwrap();
        w.append(&evs[2]).unwrap();
        w.append(&evs[3]).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("recourse/event-log").count(), 1);
        assert_eq!(read_event_log(&path).unwrap().events, evs);
    }

    #[test]
    fn garbage_tail_is_a_warning() {
        let mut text = format!("{}\n", header_line());
        for e in events(3) {
            text.push_str(&serde_json::to_string(&e).unwrap());
            text.push('\n');
        }
        text.push_str("{\"case_id\":\"R00");
        let log = parse_event_log(text.as_bytes()).unwrap();
        assert_eq!(log.events.len(), 3);
        assert_eq!(log.warnings.len(), 1);
    }

    #[test]
    fn garbage_in_the_middle_is_corruption() {
        let evs = events(2);
        let header = header_line();
        let text = format!(
            "{header}\n{}\nnot json\n{}\n",
            serde_json::to_string(&evs[0]).unwrap(),
            serde_json::to_string(&evs[1]).unwrap()
        );
        let offset = header.len() + 1 + serde_json::to_string(&evs[0]).unwrap().len() + 1;
        match parse_event_log(text.as_bytes()) {
            Err(EventLogError::CorruptLog { offset: o, line, .. }) => {
                assert_eq!(o, offset as u64);
                assert_eq!(line, 3);
            }
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn foreign_header_is_rejected() {
        let text = "{\"schema\":\"other\",\"version\":1}\n";
        assert!(matches!(parse_event_log(text.as_bytes()), Err(EventLogError::Header(_))));
    }
}
