//! Learns recurring human activities from smart-home sensor event logs.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`ingest`]: parse raw event CSVs or labeled occurrence files, split an
//!    event stream into occurrences at idle gaps, and synthesize labeled
//!    corpora for testing.
//! 2. [`clustering`]: group occurrences by a three-part similarity (location,
//!    time-of-day overlap, event-type structure) under threshold-bounded
//!    average-linkage agglomeration.
//! 3. [`hmm`]: fit one discrete hidden Markov model per cluster and recognize
//!    which cluster a fresh event sequence belongs to.
//! 4. [`tpminer`] / [`prediction`]: mine frequent interval temporal patterns
//!    from daily sequences of occurrences and turn them into next-activity
//!    prediction rules.
//!
//! [`evaluation`] scores clusterings against ground-truth labels and sweeps
//! thresholds, and [`bundle`] persists trained models as JSON.

pub mod bundle;
pub mod clustering;
pub mod evaluation;
pub mod hmm;
pub mod ingest;
pub mod prediction;
pub mod tpminer;
pub mod types;

pub use types::{
    ActivityOccurrence, Event, EventSequence, EventTypeKey, MiningConfig, SupportThreshold,
    Timestamp,
};
