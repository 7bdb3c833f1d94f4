//! Seeded synthetic corpus generation from per-activity templates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActivityOccurrence, Event, EventSequence, EventTypeKey, Timestamp};

const SECS_PER_DAY: i64 = 86_400;
/// All generated days start from this date, matching the sample-log era.
const BASE_YMD: (i32, u32, u32) = (2003, 5, 3);

/// How one activity is performed: where, which core events in which order,
/// which optional extras, and the per-day start/duration distributions.
/// Event types are `service_id:event_type` keys; all events inherit the
/// template's location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityTemplate {
    pub label: String,
    pub location: String,
    pub core_events: Vec<String>,
    #[serde(default)]
    pub optional_events: Vec<String>,
    /// Chance of swapping each adjacent core-event pair.
    #[serde(default)]
    pub swap_prob: f64,
    /// Chance of dropping each core event; also the chance of including each
    /// optional event.
    #[serde(default)]
    pub drop_prob: f64,
    /// Start time distribution, seconds past midnight.
    pub start_mean_secs: f64,
    pub start_std_secs: f64,
    pub duration_mean_secs: f64,
    pub duration_std_secs: f64,
}

/// A synthetic corpus recipe: activity templates, day count and RNG seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub activities: Vec<ActivityTemplate>,
    pub days: u32,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticSpecError {
    #[error("spec has no activity templates")]
    NoActivities,
    #[error("spec has zero days")]
    ZeroDays,
    #[error("template `{label}`: duplicate label")]
    DuplicateLabel { label: String },
    #[error("template `{label}`: empty label or location")]
    EmptyName { label: String },
    #[error("template `{label}`: no core events")]
    NoCoreEvents { label: String },
    #[error("template `{label}`: bad event key `{key}`")]
    BadKey { label: String, key: String },
    #[error("template `{label}`: {field} must lie in [0,1]")]
    BadProbability { label: String, field: &'static str },
    #[error("template `{label}`: {field} must be finite and >= 0")]
    BadSpread { label: String, field: &'static str },
    #[error("template `{label}`: duration mean must be >= 1 second")]
    BadDuration { label: String },
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticSpecError> {
        if self.activities.is_empty() {
            return Err(SyntheticSpecError::NoActivities);
        }
        if self.days == 0 {
            return Err(SyntheticSpecError::ZeroDays);
        }
        let mut seen = std::collections::BTreeSet::new();
        for tpl in &self.activities {
            let label = tpl.label.clone();
            if tpl.label.is_empty() || tpl.location.is_empty() {
                return Err(SyntheticSpecError::EmptyName { label });
            }
            if !seen.insert(&tpl.label) {
                return Err(SyntheticSpecError::DuplicateLabel { label });
            }
            if tpl.core_events.is_empty() {
                return Err(SyntheticSpecError::NoCoreEvents { label });
            }
            for key in tpl.core_events.iter().chain(&tpl.optional_events) {
                if key.parse::<EventTypeKey>().is_err() {
                    return Err(SyntheticSpecError::BadKey { label, key: key.clone() });
                }
            }
            for (p, field) in [(tpl.swap_prob, "swap_prob"), (tpl.drop_prob, "drop_prob")] {
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    return Err(SyntheticSpecError::BadProbability { label, field });
                }
            }
            for (s, field) in [
                (tpl.start_std_secs, "start_std_secs"),
                (tpl.duration_std_secs, "duration_std_secs"),
            ] {
                if !s.is_finite() || s < 0.0 {
                    return Err(SyntheticSpecError::BadSpread { label, field });
                }
            }
            if !tpl.start_mean_secs.is_finite() {
                return Err(SyntheticSpecError::BadSpread {
                    label,
                    field: "start_mean_secs",
                });
            }
            if !tpl.duration_mean_secs.is_finite() || tpl.duration_mean_secs < 1.0 {
                return Err(SyntheticSpecError::BadDuration { label });
            }
        }
        Ok(())
    }
}

/// Generate `days × templates` labeled occurrences plus the merged event
/// stream. Pure in the spec: the same spec (seed included) always produces
/// the same corpus. Occurrences are numbered by start time.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(Vec<ActivityOccurrence>, EventSequence), SyntheticSpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = Timestamp::from_ymd_hms(BASE_YMD.0, BASE_YMD.1, BASE_YMD.2, 0, 0, 0)
        .expect("valid base date");

    struct Draft {
        label: String,
        location: String,
        start: Timestamp,
        end: Timestamp,
        keys: Vec<EventTypeKey>,
    }

    let mut drafts = Vec::with_capacity(spec.days as usize * spec.activities.len());
    for day in 0..spec.days as i64 {
        for tpl in &spec.activities {
            // Fixed draw order per occurrence: start, duration, swaps,
            // drops, optional inclusions (+ position when included).
            let start_dist = Normal::new(tpl.start_mean_secs, tpl.start_std_secs)
                .expect("validated stddev");
            let offset = (start_dist.sample(&mut rng).round() as i64).clamp(0, SECS_PER_DAY - 1);
            let dur_dist = Normal::new(tpl.duration_mean_secs, tpl.duration_std_secs)
                .expect("validated stddev");
            let mut duration = 0i64;
            for _ in 0..64 {
                duration = dur_dist.sample(&mut rng).round() as i64;
                if duration >= 1 {
                    break;
                }
            }
            if duration < 1 {
                duration = tpl.duration_mean_secs.round().max(1.0) as i64;
            }

            let mut keys: Vec<EventTypeKey> = tpl
                .core_events
                .iter()
                .map(|k| k.parse().expect("validated key"))
                .collect();
            for i in 0..keys.len().saturating_sub(1) {
                if rng.gen::<f64>() < tpl.swap_prob {
                    keys.swap(i, i + 1);
                }
            }
            let kept: Vec<bool> = keys.iter().map(|_| rng.gen::<f64>() >= tpl.drop_prob).collect();
            let mut events: Vec<EventTypeKey> = keys
                .iter()
                .zip(&kept)
                .filter(|(_, keep)| **keep)
                .map(|(k, _)| k.clone())
                .collect();
            if events.is_empty() {
                // Never emit an event-less occurrence; keep the first core.
                events.push(keys[0].clone());
            }
            for opt in &tpl.optional_events {
                if rng.gen::<f64>() < tpl.drop_prob {
                    let at = rng.gen_range(0..=events.len());
                    events.insert(at, opt.parse().expect("validated key"));
                }
            }

            let start = base.plus_secs(day * SECS_PER_DAY + offset);
            drafts.push(Draft {
                label: tpl.label.clone(),
                location: tpl.location.clone(),
                start,
                end: start.plus_secs(duration),
                keys: events,
            });
        }
    }

    drafts.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(a.end.cmp(&b.end))
            .then_with(|| a.label.cmp(&b.label))
    });

    let mut occurrences = Vec::with_capacity(drafts.len());
    let mut stream = Vec::new();
    for (sid, draft) in drafts.into_iter().enumerate() {
        let n = draft.keys.len() as i64;
        let duration = draft.end.secs_since(draft.start);
        let events: Vec<Event> = draft
            .keys
            .iter()
            .enumerate()
            .map(|(i, key)| {
                let t = draft.start.plus_secs((i as i64 + 1) * duration / (n + 1));
                Event::new(&key.service_id, &key.event_type, t, &draft.location)
                    .expect("validated fields")
            })
            .collect();
        stream.extend(events.iter().cloned());
        occurrences.push(
            ActivityOccurrence::new(
                sid as u64,
                Some(draft.label),
                draft.location,
                draft.start,
                draft.end,
                events,
            )
            .expect("events placed inside the window"),
        );
    }
    Ok((occurrences, EventSequence::new(stream)))
}
