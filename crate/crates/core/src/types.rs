//! Shared domain types: sensor events, event sequences, activity occurrences,
//! and the mining configuration consumed by the rest of the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// An absolute instant at one-second resolution.
///
/// Stored as seconds since the Unix epoch; sub-second input is truncated at
/// construction. Rendered and parsed as `YYYY-MM-DDTHH:MM:SS` without a zone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_unix_secs(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn unix_secs(&self) -> i64 {
        self.0
    }

    /// Signed difference `self - other` in seconds.
    pub fn secs_since(&self, other: Timestamp) -> i64 {
        self.0 - other.0
    }

    pub fn plus_secs(&self, secs: i64) -> Timestamp {
        Timestamp(self.0 + secs)
    }

    /// Calendar day index (days since the Unix epoch, floored).
    pub fn day_index(&self) -> i64 {
        self.0.div_euclid(86_400)
    }

    pub fn from_ymd_hms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Option<Timestamp> {
        let date = chrono::NaiveDate::from_ymd_opt(y, mo, d)?;
        let dt = date.and_hms_opt(h, mi, s)?;
        Some(Timestamp(dt.and_utc().timestamp()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::from_timestamp(self.0, 0) {
            Some(dt) => write!(f, "{}", dt.naive_utc().format("%Y-%m-%dT%H:%M:%S")),
            None => write!(f, "@{}", self.0),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid timestamp {0:?}: expected YYYY-MM-DDTHH:MM:SS")]
pub struct TimestampParseError(pub String);

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // %.f accepts an optional fractional part, which we truncate.
        let dt = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
            .map_err(|_| TimestampParseError(s.to_string()))?;
        Ok(Timestamp(dt.and_utc().timestamp()))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("event field `{0}` is empty")]
    EmptyField(&'static str),
}

/// One recorded sensor firing: which service fired, how, when, and where.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub service_id: String,
    pub event_type: String,
    pub timestamp: Timestamp,
    pub location: String,
}

impl Event {
    pub fn new(
        service_id: impl Into<String>,
        event_type: impl Into<String>,
        timestamp: Timestamp,
        location: impl Into<String>,
    ) -> Result<Event, EventError> {
        let service_id = service_id.into();
        let event_type = event_type.into();
        let location = location.into();
        if service_id.is_empty() {
            return Err(EventError::EmptyField("service_id"));
        }
        if event_type.is_empty() {
            return Err(EventError::EmptyField("event_type"));
        }
        if location.is_empty() {
            return Err(EventError::EmptyField("location"));
        }
        Ok(Event {
            service_id,
            event_type,
            timestamp,
            location,
        })
    }

    pub fn type_key(&self) -> EventTypeKey {
        EventTypeKey {
            service_id: self.service_id.clone(),
            event_type: self.event_type.clone(),
        }
    }
}

/// The (service, event type) pair that identifies what kind of event fired,
/// independent of time and place. Ordering is lexicographic on
/// (service_id, event_type).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventTypeKey {
    pub service_id: String,
    pub event_type: String,
}

impl EventTypeKey {
    pub fn new(service_id: impl Into<String>, event_type: impl Into<String>) -> EventTypeKey {
        EventTypeKey {
            service_id: service_id.into(),
            event_type: event_type.into(),
        }
    }
}

impl fmt::Display for EventTypeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.service_id, self.event_type)
    }
}

impl FromStr for EventTypeKey {
    type Err = EventError;

    /// Splits at the first `:`; service ids therefore must not contain one.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (service_id, event_type) = s.split_once(':').unwrap_or((s, ""));
        if service_id.is_empty() {
            return Err(EventError::EmptyField("service_id"));
        }
        if event_type.is_empty() {
            return Err(EventError::EmptyField("event_type"));
        }
        Ok(EventTypeKey::new(service_id, event_type))
    }
}

/// A time-ordered list of events. Construction sorts stably by timestamp, so
/// unsorted input is accepted and ties keep their original relative order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventSequence {
    events: Vec<Event>,
}

impl EventSequence {
    pub fn new(mut events: Vec<Event>) -> EventSequence {
        events.sort_by_key(|e| e.timestamp);
        EventSequence { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first(&self) -> Option<&Event> {
        self.events.first()
    }

    pub fn last(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// The event-type keys in time order.
    pub fn type_keys(&self) -> Vec<EventTypeKey> {
        self.events.iter().map(Event::type_key).collect()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

impl<'a> IntoIterator for &'a EventSequence {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OccurrenceError {
    #[error("occurrence {sid}: start {start} is after end {end}")]
    StartAfterEnd {
        sid: u64,
        start: Timestamp,
        end: Timestamp,
    },
    #[error("occurrence {sid}: event at {at} lies outside [{start}, {end}]")]
    EventOutsideWindow {
        sid: u64,
        at: Timestamp,
        start: Timestamp,
        end: Timestamp,
    },
    #[error("occurrence {sid}: location is empty")]
    EmptyLocation { sid: u64 },
}

/// One performance of an activity: its interval, its location, and the
/// sensor events recorded inside the interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityOccurrence {
    pub sid: u64,
    pub label: Option<String>,
    pub location: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub events: EventSequence,
}

impl ActivityOccurrence {
    pub fn new(
        sid: u64,
        label: Option<String>,
        location: impl Into<String>,
        start: Timestamp,
        end: Timestamp,
        events: Vec<Event>,
    ) -> Result<ActivityOccurrence, OccurrenceError> {
        let location = location.into();
        if location.is_empty() {
            return Err(OccurrenceError::EmptyLocation { sid });
        }
        if start > end {
            return Err(OccurrenceError::StartAfterEnd { sid, start, end });
        }
        let events = EventSequence::new(events);
        for e in &events {
            if e.timestamp < start || e.timestamp > end {
                return Err(OccurrenceError::EventOutsideWindow {
                    sid,
                    at: e.timestamp,
                    start,
                    end,
                });
            }
        }
        Ok(ActivityOccurrence {
            sid,
            label: label.filter(|l| !l.is_empty()),
            location,
            start,
            end,
            events,
        })
    }

    /// Interval length in seconds.
    pub fn duration_secs(&self) -> i64 {
        self.end.secs_since(self.start)
    }

    /// The distinct event-type keys observed in this occurrence.
    pub fn type_key_set(&self) -> std::collections::BTreeSet<EventTypeKey> {
        self.events.iter().map(Event::type_key).collect()
    }
}

/// Minimum-support threshold: an absolute sequence count or a fraction of the
/// database size (rounded up).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SupportThreshold {
    Count(u64),
    Fraction(f64),
}

impl SupportThreshold {
    /// Resolve against a database of `db_size` sequences.
    pub fn resolve(&self, db_size: usize) -> u64 {
        match *self {
            SupportThreshold::Count(c) => c,
            SupportThreshold::Fraction(f) => (f * db_size as f64).ceil() as u64,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            SupportThreshold::Count(c) => c >= 1,
            SupportThreshold::Fraction(f) => f > 0.0 && f <= 1.0,
        }
    }
}

impl FromStr for SupportThreshold {
    type Err = String;

    /// `"0.03"` (or anything with a `.`/exponent) is a fraction; a bare
    /// integer is an absolute count.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = if s.contains(['.', 'e', 'E']) {
            let f: f64 = s.parse().map_err(|_| format!("invalid minsup `{s}`"))?;
            SupportThreshold::Fraction(f)
        } else {
            let c: u64 = s.parse().map_err(|_| format!("invalid minsup `{s}`"))?;
            SupportThreshold::Count(c)
        };
        if !t.is_valid() {
            return Err(format!(
                "minsup must be a count >= 1 or a fraction in (0,1], got `{s}`"
            ));
        }
        Ok(t)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("rho must lie in [0,1], got {0}")]
    Rho(f64),
    #[error("minsup must be a count >= 1 or a fraction in (0,1]")]
    MinSup,
    #[error("min_pre must lie in [0,1], got {0}")]
    MinPre(f64),
    #[error("smoothing must be >= 0, got {0}")]
    Smoothing(f64),
    #[error("emission_floor must lie in (0,1), got {0}")]
    EmissionFloor(f64),
    #[error("segment_gap_secs must be > 0, got {0}")]
    SegmentGap(i64),
}

/// Thresholds and constants shared across the pipeline stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Distance threshold for the agglomerative merge loop.
    pub rho: f64,
    /// Minimum support for the temporal-pattern miner.
    pub minsup: SupportThreshold,
    /// Minimum predictability for rule generation.
    pub min_pre: f64,
    /// Laplace constant applied to initial/transition counts.
    pub smoothing: f64,
    /// Off-diagonal emission probability and out-of-vocabulary score.
    pub emission_floor: f64,
    /// Idle gap (seconds) at which an event stream is split.
    pub segment_gap_secs: i64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            rho: 0.9,
            minsup: SupportThreshold::Fraction(0.03),
            min_pre: 0.5,
            smoothing: 0.01,
            emission_floor: 1e-3,
            segment_gap_secs: 300,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.rho) || self.rho.is_nan() {
            return Err(ConfigError::Rho(self.rho));
        }
        if !self.minsup.is_valid() {
            return Err(ConfigError::MinSup);
        }
        if !(0.0..=1.0).contains(&self.min_pre) || self.min_pre.is_nan() {
            return Err(ConfigError::MinPre(self.min_pre));
        }
        if self.smoothing.is_nan() || self.smoothing < 0.0 {
            return Err(ConfigError::Smoothing(self.smoothing));
        }
        if !(self.emission_floor > 0.0 && self.emission_floor < 1.0) {
            return Err(ConfigError::EmissionFloor(self.emission_floor));
        }
        if self.segment_gap_secs <= 0 {
            return Err(ConfigError::SegmentGap(self.segment_gap_secs));
        }
        Ok(())
    }
}
