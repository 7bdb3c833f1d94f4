//! Event-log and occurrence-corpus IO, gap segmentation, and synthetic
//! corpus generation.
//!
//! Event logs are CSV with columns `timestamp,sensor_id,event_type,location`.
//! Occurrence corpora are JSON lines, one object per occurrence with keys
//! `sid`, `label`, `location`, `start`, `end` and `events`.

mod synthetic;

pub use synthetic::{generate_synthetic, ActivityTemplate, SyntheticSpec, SyntheticSpecError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    ActivityOccurrence, Event, EventSequence, OccurrenceError, Timestamp,
};

pub const EVENT_LOG_HEADER: [&str; 4] = ["timestamp", "sensor_id", "event_type", "location"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}` in event-log header")]
    MissingColumn(&'static str),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: cannot parse timestamp `{value}`")]
    BadTimestamp { line: u64, value: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: u64, field: &'static str },
    #[error("line {line}: {source}")]
    BadOccurrence {
        line: u64,
        #[source]
        source: OccurrenceError,
    },
    #[error("duplicate sid {0}")]
    DuplicateSid(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse an event-log CSV. Rows may be unsorted; the result is time-ordered.
pub fn parse_event_log(source: &str) -> Result<EventSequence, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Malformed { line: 1, msg: e.to_string() })?
        .clone();
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(EVENT_LOG_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))?;
    }

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &'static str| -> Result<&str, IngestError> {
            match record.get(columns[i]) {
                Some(v) if !v.is_empty() => Ok(v),
                Some(_) | None => Err(IngestError::EmptyField { line, field: name }),
            }
        };
        let raw_ts = field(0, "timestamp")?;
        let timestamp: Timestamp = raw_ts.parse().map_err(|_| IngestError::BadTimestamp {
            line,
            value: raw_ts.to_string(),
        })?;
        let service_id = field(1, "sensor_id")?;
        let event_type = field(2, "event_type")?;
        let location = field(3, "location")?;
        events.push(
            Event::new(service_id, event_type, timestamp, location)
                .expect("fields checked non-empty"),
        );
    }
    Ok(EventSequence::new(events))
}

/// Render an event sequence back to the canonical CSV form.
pub fn render_event_log(events: &EventSequence) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(EVENT_LOG_HEADER).expect("write to vec");
    for e in events {
        writer
            .write_record([
                e.timestamp.to_string().as_str(),
                &e.service_id,
                &e.event_type,
                &e.location,
            ])
            .expect("write to vec");
    }
    String::from_utf8(writer.into_inner().expect("flush to vec")).expect("csv output is utf-8")
}

#[derive(Serialize, Deserialize)]
struct EventWire {
    service_id: String,
    event_type: String,
    t: Timestamp,
    location: String,
}

#[derive(Serialize, Deserialize)]
struct OccurrenceWire {
    #[serde(default)]
    sid: Option<u64>,
    label: Option<String>,
    location: String,
    start: Timestamp,
    end: Timestamp,
    events: Vec<EventWire>,
}

/// Parse a JSON-lines occurrence corpus. Objects without a `sid` get the
/// smallest unused ids, assigned in file order.
pub fn parse_occurrences(source: &str) -> Result<Vec<ActivityOccurrence>, IngestError> {
    let mut wires = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let wire: OccurrenceWire = serde_json::from_str(raw)
            .map_err(|e| IngestError::Malformed { line, msg: e.to_string() })?;
        if let Some(sid) = wire.sid {
            if !used.insert(sid) {
                return Err(IngestError::DuplicateSid(sid));
            }
        }
        wires.push((line, wire));
    }

    let mut next_free = 0u64;
    let mut occurrences = Vec::with_capacity(wires.len());
    for (line, wire) in wires {
        let sid = match wire.sid {
            Some(sid) => sid,
            None => {
                while used.contains(&next_free) {
                    next_free += 1;
                }
                used.insert(next_free);
                next_free
            }
        };
        let events = wire
            .events
            .into_iter()
            .enumerate()
            .map(|(k, e)| {
                if e.service_id.is_empty() {
                    return Err(IngestError::EmptyField { line, field: "service_id" });
                }
                if e.event_type.is_empty() {
                    return Err(IngestError::EmptyField { line, field: "event_type" });
                }
                if e.location.is_empty() {
                    return Err(IngestError::EmptyField { line, field: "location" });
                }
                Event::new(e.service_id, e.event_type, e.t, e.location).map_err(|_| {
                    IngestError::Malformed { line, msg: format!("bad event {k}") }
                })
            })
            .collect::<Result<Vec<Event>, IngestError>>()?;
        let occ =
            ActivityOccurrence::new(sid, wire.label, wire.location, wire.start, wire.end, events)
                .map_err(|source| IngestError::BadOccurrence { line, source })?;
        occurrences.push(occ);
    }
    Ok(occurrences)
}

/// Render occurrences as JSON lines, inverse of [`parse_occurrences`].
pub fn render_occurrences(occurrences: &[ActivityOccurrence]) -> String {
    let mut out = String::new();
    for occ in occurrences {
        let wire = OccurrenceWire {
            sid: Some(occ.sid),
            label: occ.label.clone(),
            location: occ.location.clone(),
            start: occ.start,
            end: occ.end,
            events: occ
                .events
                .iter()
                .map(|e| EventWire {
                    service_id: e.service_id.clone(),
                    event_type: e.event_type.clone(),
                    t: e.timestamp,
                    location: e.location.clone(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&wire).expect("occurrence serializes"));
        out.push('\n');
    }
    out
}

/// Split a stream at every idle gap longer than `gap_secs`. The segments
/// concatenate back to the input and none is empty.
pub fn segment(stream: &EventSequence, gap_secs: i64) -> Vec<EventSequence> {
    let mut segments = Vec::new();
    let mut current: Vec<Event> = Vec::new();
    for event in stream {
        if let Some(last) = current.last() {
            if event.timestamp.secs_since(last.timestamp) > gap_secs {
                segments.push(EventSequence::new(std::mem::take(&mut current)));
            }
        }
        current.push(event.clone());
    }
    if !current.is_empty() {
        segments.push(EventSequence::new(current));
    }
    segments
}
